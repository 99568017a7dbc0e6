"""Full exit-configuration sweep followed by the ANOVA report.

    python3 scripts/run_exit_sweep.py [--checkpoint PATH] [--runs 100] [--out runs/exit_sweep]

Uses the greedy fallback policy unless a checkpoint is given.
"""

import argparse
import sys
from pathlib import Path

from asisim.cli import main


def run(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--checkpoint")
    p.add_argument("--runs", default="100")
    p.add_argument("--seed", default="0")
    p.add_argument("--workers", default="1")
    p.add_argument("--out", default="runs/exit_sweep")
    args = p.parse_args(argv)
    out = Path(args.out)
    sweep = ["sweep", "--blocked", "all", "--runs", args.runs, "--seed", args.seed, "--workers", args.workers,
             "--out", str(out)]
    if args.checkpoint:
        sweep += ["--checkpoint", args.checkpoint]
    code = main(sweep)
    if code:
        return code
    return main(["stats", "--results", str(out / "results.csv"), "--out", str(out / "report.md")])


if __name__ == "__main__":
    sys.exit(run())
