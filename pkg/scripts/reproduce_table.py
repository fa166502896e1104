#!/usr/bin/env python3
"""Reproduce the six-point key-rate table from the measured QBERs.

Runs the analytic pipeline over all operating points, checks that the
rate falls monotonically with loss, and writes table1.csv next to the
terminal table.  Extra CLI flags pass through, e.g.:

    python3 scripts/reproduce_table.py --mode montecarlo --pulses 1e7
"""

import sys

from pathqkd.cli import main

if __name__ == "__main__":
    argv = ["table1", "--check"]
    if not any(a.startswith("--out") for a in sys.argv[1:]):
        argv += ["--out", "table1.csv"]
    sys.exit(main(argv + sys.argv[1:]))
