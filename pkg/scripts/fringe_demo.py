#!/usr/bin/env python3
"""Fringe scan of the stabilization channel's polarization selectivity.

Ramps the pair phase through full fringes with the phase modulator on
and off for both polarizations, prints the four visibilities, and
checks the on/aligned case is washed out while the others stay high:

    python3 scripts/fringe_demo.py --pol both
"""

import sys

from pathqkd.cli import main

if __name__ == "__main__":
    argv = ["fringes", "--check"]
    if not any(a.startswith("--out") for a in sys.argv[1:]):
        argv += ["--out", "fringes.csv"]
    sys.exit(main(argv + sys.argv[1:]))
