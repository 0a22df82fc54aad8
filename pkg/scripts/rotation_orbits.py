"""Orbits of prescribed rotation number for the periodic standard-map model.

Usage: python scripts/rotation_orbits.py [--omega 0 0.618 1/3] [--l 100] [--out rotation.csv]
"""

import argparse
import math

from antilimit import builtin_model
from antilimit.io import write_csv
from antilimit.rotation import construct_rotation_orbit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    golden = (math.sqrt(5) - 1) / 2
    ap.add_argument("--omega", nargs="+", default=["0", repr(golden), "1/3"])
    ap.add_argument("--l", type=int, default=100)
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--kappa", type=float, default=1.0)
    ap.add_argument("--out", default="rotation.csv")
    args = ap.parse_args()

    m = builtin_model("standard-map", {"gamma": 0.0, "kappa": args.kappa, "epsilon": args.eps,
                                       "rescale": [1.0, 0.25], "omega": golden})
    rows = []
    for omega in args.omega:
        orb = construct_rotation_orbit(m, omega, args.l)
        print(f"omega={omega}: max|y_k - k omega| {orb.max_deviation:.3f}  forward {orb.forward:.6f}  "
              f"backward {orb.backward:.6f}  residual {orb.original_residual:.1e}")
        rows.extend((omega, *row) for row in orb.csv_rows())
    write_csv(args.out, ["omega", "k", "m", "x", "y", "rho"], rows)


if __name__ == "__main__":
    main()
