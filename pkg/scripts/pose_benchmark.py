#!/usr/bin/env python3
"""Synthetic registration benchmark: flow filter vs per-particle gradient descent.

80 pose particles, identical initialization for both methods, translation
and signed rotation error of the mean pose recorded per iteration.
"""
import sys

from particleflow.cli import main

if __name__ == "__main__":
    sys.exit(main([
        "pose",
        "--n-steps", "100",
        "--out", "pose_benchmark.csv",
        *sys.argv[1:],
    ]))
