#!/usr/bin/env python3
"""One-hour stability characterization of the stabilized link.

Streams the X basis at nu ~ 0.24 while both pair loops run closed,
prints the windowed QBER summary, writes stability.csv, and checks that
every lock loss recovers within 30 s:

    python3 scripts/stability_run.py --seed 3
"""

import sys

from pathqkd.cli import main

if __name__ == "__main__":
    argv = ["stability", "--check"]
    if not any(a.startswith("--out") for a in sys.argv[1:]):
        argv += ["--out", "stability.csv"]
    sys.exit(main(argv + sys.argv[1:]))
