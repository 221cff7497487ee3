#!/usr/bin/env python3
"""Run the flagship N=100, q=3 experiment end to end.

Simulates the 300-run ensemble, builds the certificates and bound
curves, and writes the comparison tables — everything the result plots
need — into the config's output directory (override with --out).

Usage:
    python scripts/run_flagship_experiment.py [--config configs/paper.json]
                                              [--out results/flagship]
                                              [--workers N]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from asyncheat.cli import main as cli_main  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="configs/paper.json")
    parser.add_argument("--out", default=None)
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = parser.parse_args()

    common = ["--config", args.config, "--workers", str(args.workers)]
    if args.out:
        common += ["--out", args.out]
    for command in ("simulate", "analyze", "compare"):
        print(f"=== {command} ===")
        code = cli_main([command, *common])
        if code != 0:
            print(f"{command} failed with exit code {code}", file=sys.stderr)
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
