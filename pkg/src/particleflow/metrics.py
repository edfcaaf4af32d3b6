"""Evaluation metrics: Gaussian fits, closed-form KL, exact Wasserstein, pose errors."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.spatial.transform import Rotation

from .pose import PoseState


@dataclass(frozen=True)
class GaussianSummary:
    """Mean vector and covariance matrix, fitted to particles or analytic.

    `ridge` records the diagonal regularization applied by `fit_gaussian`
    (None for analytic summaries); it is logged per run because it affects
    downstream KL values.
    """

    mean: np.ndarray
    covariance: np.ndarray
    ridge: float | None = None

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if mean.ndim != 1:
            raise ValueError(f"mean must be 1-d, got shape {mean.shape}")
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ValueError(f"covariance must be ({d}, {d}), got {cov.shape}")
        asym = float(np.abs(cov - cov.T).max(initial=0.0))
        scale = max(1.0, float(np.abs(cov).max(initial=0.0)))
        if asym > 1e-12 * scale:
            raise ValueError(f"covariance asymmetric: max |S - S^T| = {asym:g}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class AssignmentResult:
    """Minimizing permutation and total (unaveraged) cost of an assignment."""

    permutation: np.ndarray  # permutation[i] = index matched to point i
    total_cost: float


def default_ridge(covariance: np.ndarray) -> float:
    """Trace-scaled diagonal loading: 1e-6 * tr(S)/d + 1e-12."""
    cov = np.asarray(covariance, dtype=np.float64)
    return 1e-6 * float(np.trace(cov)) / cov.shape[0] + 1e-12


def fit_gaussian(particles, ridge: float | None = None) -> GaussianSummary:
    """Sample mean and unbiased sample covariance plus ridge * I.

    Accepts an (n, d) array or anything exposing a `.particles` array.
    With n close to or below d the raw sample covariance is singular; the
    default ridge (see `default_ridge`) keeps the fit usable for KL. Pass
    ridge=0 to disable regularization. Requires n >= 2.
    """
    x = np.asarray(getattr(particles, "particles", particles), dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"particles must be an (n, d) array, got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise ValueError(f"need at least 2 particles to fit a Gaussian, got {n}")
    if ridge is not None and ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    applied = default_ridge(cov) if ridge is None else float(ridge)
    cov = cov + applied * np.eye(d)
    return GaussianSummary(mean, cov, ridge=applied)


def _cholesky_or_diagnose(cov: np.ndarray, name: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        eigs = np.linalg.eigvalsh(cov)
        raise ValueError(
            f"{name} covariance is not positive definite "
            f"(eigenvalues in [{eigs.min():g}, {eigs.max():g}])"
        ) from None


def kl_gaussians(p: GaussianSummary, q: GaussianSummary) -> float:
    """KL(p || q) between multivariate Gaussians in closed form.

    0.5 * [tr(Sq^-1 Sp) + (mq - mp)^T Sq^-1 (mq - mp) - d
           + ln det Sq - ln det Sp]

    evaluated through Cholesky factors; neither covariance is explicitly
    inverted. Raises ValueError with an eigenvalue diagnostic if either
    covariance is not positive definite.
    """
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    d = p.dim
    lq = _cholesky_or_diagnose(q.covariance, "second (reference)")
    lp = _cholesky_or_diagnose(p.covariance, "first")
    a = scipy.linalg.solve_triangular(lq, lp, lower=True)
    trace_term = float(np.sum(a * a))
    u = scipy.linalg.solve_triangular(lq, q.mean - p.mean, lower=True)
    maha = float(u @ u)
    logdet_q = 2.0 * float(np.sum(np.log(np.diag(lq))))
    logdet_p = 2.0 * float(np.sum(np.log(np.diag(lp))))
    kl = 0.5 * (trace_term + maha - d + logdet_q - logdet_p)
    if kl < -1e-8:
        raise ValueError(f"KL evaluated to {kl:g} < 0; inputs are inconsistent")
    return max(kl, 0.0)


def wasserstein_exact(
    a,
    b,
    metric: Union[str, Callable[[np.ndarray, np.ndarray], float]] = "euclidean",
) -> AssignmentResult:
    """Assignment-form Wasserstein distance between equal-size point sets.

    Solves min over permutations pi of sum_i metric(a_i, b_pi(i)) exactly
    with an O(N^3) assignment solver and returns the minimizing
    permutation together with the total cost (a plain sum over the N
    matched pairs, no 1/N averaging).
    """
    xa = np.asarray(getattr(a, "particles", a), dtype=np.float64)
    xb = np.asarray(getattr(b, "particles", b), dtype=np.float64)
    if xa.ndim != 2 or xb.ndim != 2:
        raise ValueError("point sets must be (n, d) arrays")
    if xa.shape[0] != xb.shape[0]:
        raise ValueError(
            f"point sets must have equal size, got {xa.shape[0]} and {xb.shape[0]}"
        )
    cost = cdist(xa, xb, metric=metric)
    if not np.isfinite(cost).all():
        raise ValueError("metric produced non-finite pairwise costs")
    rows, cols = linear_sum_assignment(cost)
    return AssignmentResult(permutation=cols.copy(), total_cost=float(cost[rows, cols].sum()))


def pose_errors(estimate: PoseState, truth: PoseState) -> tuple[float, float]:
    """Translation error in centimeters and signed geodesic rotation error in degrees.

    The unsigned angle comes from the relative rotation R_true^T R_est via
    theta = arccos((tr - 1) / 2); its sign is that of the projection of the
    relative rotation axis onto the ground-truth rotation axis (positive
    when the ground truth does not rotate, or when the estimate matches
    exactly).
    """
    translation_cm = 100.0 * float(np.linalg.norm(estimate.translation - truth.translation))
    relative = truth.rotation_matrix().T @ estimate.rotation_matrix()
    rotvec = Rotation.from_matrix(relative).as_rotvec()
    angle = float(np.linalg.norm(rotvec))
    if angle == 0.0:
        return translation_cm, 0.0
    sign = 1.0
    truth_norm = float(np.linalg.norm(truth.rotation))
    if truth_norm > 0.0 and float(rotvec @ truth.rotation) < 0.0:
        sign = -1.0
    return translation_cm, sign * float(np.degrees(angle))
