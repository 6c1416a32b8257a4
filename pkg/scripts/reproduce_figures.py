"""Write every figure table (and a gnuplot script per table) into one directory.

    python3 scripts/reproduce_figures.py --out results [--no-sim] [--seed 0]
"""

import argparse
import sys
from pathlib import Path

from movarray import cli

RUNS = [
    ("lcr_curve", "fig2"),
    ("ccdf_curve", "fig3"),
    ("cdf_curve", "fig4"),
    ("comparison", "fig5"),
]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-sim", action="store_true")
    p.add_argument("--threads", type=int)
    args = p.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    status = 0
    for scenario, group in RUNS:
        target = out / f"{group}.csv"
        argv = [scenario, "--preset", group, "--out", str(target), "--plot"]
        argv += ["--no-sim"] if args.no_sim else ["--seed", str(args.seed)]
        if args.threads:
            argv += ["--threads", str(args.threads)]
        code = cli.main(argv)
        print(f"{group}: {scenario} -> {target} (exit {code})")
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
