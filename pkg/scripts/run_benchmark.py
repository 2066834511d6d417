#!/usr/bin/env python3
"""Run the full synthetic benchmark and print the aggregated F1 table."""

import argparse
import sys
from pathlib import Path

from lsnpc.cli import main as cli_main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(ROOT / "configs" / "default.ini"))
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args()
    argv = ["eval", "--config", args.config]
    if args.out:
        argv += ["--out", args.out]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    if args.quiet:
        argv.append("--quiet")
    sys.exit(cli_main(argv))
