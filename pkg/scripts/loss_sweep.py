#!/usr/bin/env python3
"""Optimized secret-key rate versus channel loss.

Sweeps 5.8 to 25.8 dB in 1 dB steps, re-optimizing the source at each
point, and verifies the curve is decreasing and log-convex.  Pass
--start/--stop/--step to change the range:

    python3 scripts/loss_sweep.py --start 5.8 --stop 25.8 --step 4.0
"""

import sys

from pathqkd.cli import main

if __name__ == "__main__":
    argv = ["sweep", "--check"]
    if not any(a.startswith("--step") for a in sys.argv[1:]):
        argv += ["--step", "1.0"]
    if not any(a.startswith("--out") for a in sys.argv[1:]):
        argv += ["--out", "sweep.csv"]
    sys.exit(main(argv + sys.argv[1:]))
