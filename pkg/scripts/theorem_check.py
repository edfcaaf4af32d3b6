#!/usr/bin/env python3
"""Empirical check of the Wasserstein divergence bound for perturbed flows.

Prints PASS/FAIL for the bound (with 5% Euler slack) and for the
halved-Lipschitz negative control, and writes per-checkpoint rows.
"""
import sys

from particleflow.cli import main

if __name__ == "__main__":
    sys.exit(main([
        "theorem",
        "--seeds", "0,1,2,3,4",
        "--out", "theorem_check.csv",
        *sys.argv[1:],
    ]))
