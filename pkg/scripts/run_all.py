"""Run every experiment at reference settings into one output root.

Usage: python scripts/run_all.py [OUT_ROOT] [--fast]
"""
import argparse
import sys
from pathlib import Path

from causalshap.cli import main

FAST = {
    "breakfast": ["--n-fit", "20000", "--n-eval", "2000"],
    "diabetes-risk": ["--n-fit", "20000", "--n-eval", "2000"],
    "linear-sweep": ["--n-scms", "20"],
    "discrete": ["--n-fit", "10000", "--n-eval", "2000"],
}


def run(root: Path, fast: bool) -> int:
    worst = 0
    for name, fast_args in FAST.items():
        args = ["experiment", name, "--out", str(root / name), "--n-jobs", "4"]
        if name == "discrete":
            args += ["--graph", "signalling+decoys"]
        if fast:
            args += fast_args
        print(f"== {name}", flush=True)
        worst = max(worst, main(args))
    return worst


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out", nargs="?", default="runs")
    p.add_argument("--fast", action="store_true", help="reduced sample sizes")
    a = p.parse_args()
    sys.exit(run(Path(a.out), a.fast))
