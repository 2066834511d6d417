#!/usr/bin/env python3
"""Sensitivity grid over the latent-shift and proposal degrees of freedom."""

import argparse
import sys
from pathlib import Path

from lsnpc.cli import main as cli_main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(ROOT / "configs" / "default.ini"))
    parser.add_argument("--out", default=None)
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args()
    argv = ["sweep", "--config", args.config]
    if args.out:
        argv += ["--out", args.out]
    if args.quiet:
        argv.append("--quiet")
    sys.exit(cli_main(argv))
