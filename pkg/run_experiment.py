#!/usr/bin/env python3
"""
run_experiment.py

Entry point for aurora-qd experiments on the planar unicycle.

Usage:
 - python run_experiment.py run --config configs/desk.yaml --variant HC-Nav --seed 3
 - python run_experiment.py eval runs/AURORA_seed0/container.csv --tasks nav turn --plot
 - python run_experiment.py compare 'runs/*/manifest.json' --task forw

Inputs:
 - configs/*.yaml  experiment configuration (variant, budget, encoder settings)

Outputs (per run, under <out_dir>/<variant>_seed<seed>/):
 - container.csv, progress.csv, coverage_<task>.csv, entropy.csv
 - encoder_phases.csv, encoder.bin (AURORA only)
 - manifest.json (config echo, counts, timings, content hash)
"""

import sys

from aurora_qd.cli import main

if __name__ == "__main__":
    sys.exit(main())
