#!/usr/bin/env python3
"""Run every shipped experiment config and print a one-line summary each.

Usage: python scripts/run_all_experiments.py [--out DIR] [--seed N]

Exits nonzero if any experiment reports a failed check.
"""

import argparse
import sys
from pathlib import Path

from robustdual.cli import main as cli_main

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="results")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    worst = 0
    for cfg in sorted(CONFIG_DIR.glob("*.toml")):
        exp_id = None
        for line in cfg.read_text().splitlines():
            if line.startswith("experiment"):
                exp_id = line.split("=", 1)[1].strip().strip('"')
                break
        if exp_id is None:
            print(f"skipping {cfg.name}: no experiment field")
            continue
        # one output directory per config so same-id runs do not clobber
        argv = ["run", exp_id, "--config", str(cfg),
                "--out", str(Path(args.out) / cfg.stem)]
        if args.seed is not None:
            argv += ["--seed", str(args.seed)]
        code = cli_main(argv)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
