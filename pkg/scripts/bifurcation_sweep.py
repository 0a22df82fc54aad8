"""Per-fiber almost-horizontal component counts of the vs-family over s.

Usage: python scripts/bifurcation_sweep.py [--eps 0.001] [--n-theta 64] [--out counts.csv]
"""

import argparse

import numpy as np

from antilimit import builtin_model
from antilimit.io import write_csv
from antilimit.levelset import scan_fiber_1d


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, default=0.001)
    ap.add_argument("--n-theta", type=int, default=64)
    ap.add_argument("--grid", type=int, default=512)
    ap.add_argument("--s", type=float, nargs="+", default=[0.0, 0.25, 0.4, 0.45, 0.5, 0.6, 0.75, 1.0])
    ap.add_argument("--out", default="bifurcation.csv")
    args = ap.parse_args()

    thetas = np.arange(args.n_theta) / args.n_theta
    rows = []
    for s in args.s:
        m = builtin_model("vs-family", {"s": s, "epsilon": args.eps, "mode": "oneD"})
        counts = [scan_fiber_1d(m, th, args.grid).count_almost_horizontal for th in thetas]
        n_multi = sum(c >= 2 for c in counts)
        rows.append((s, min(counts), max(counts), n_multi))
        print(f"s={s:<6g} counts {min(counts)}..{max(counts)}  multi-component fibers {n_multi}")
    write_csv(args.out, ["s", "min_count", "max_count", "n_multi"], rows)


if __name__ == "__main__":
    main()
