#!/usr/bin/env python3
"""Dimension and particle-count sweep on the synthetic localization task.

Produces the data behind KL-vs-iteration curves (per dimension) and
final-iteration KL versus dimension, for the flow filter and the Monte
Carlo localization baseline. Plot from the CSV with any tool; aggregate
with `particleflow summarize`.
"""
import sys

from particleflow.cli import main

if __name__ == "__main__":
    sys.exit(main([
        "synthetic",
        "--dims", "5,10,20,50",
        "--n-particles", "10,100",
        "--out", "synthetic_sweep.csv",
        *sys.argv[1:],
    ]))
