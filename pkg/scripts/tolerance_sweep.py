"""Tolerance sweep in the style of the result tables: FOM solves, basis sizes,
relative goal error, effectivity and confusion counts per tolerance.

    python3 scripts/tolerance_sweep.py heat_1d --tols 0.1 0.05 0.01 0.005 0.001
"""

import argparse
import csv
import sys

from more_dwr.cli_io import load_preset, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("preset")
    parser.add_argument("--tols", type=float, nargs="+", default=[0.1, 0.05, 0.01, 0.005, 0.001])
    parser.add_argument("--csv", help="also write the table to this file")
    args = parser.parse_args()

    header = ["tol", "fom_solves", "N_primal", "N_dual", "rel_err", "effectivity",
              "case1", "case2", "case3", "case4", "speedup"]
    rows = []
    print("\t".join(header))
    for tol in args.tols:
        config = load_preset(args.preset)
        config.rom.tol = tol
        config.mode = "verification"
        rep = run_experiment(config)
        conf = rep.confusion
        row = [tol, rep.fom_solves, *rep.final_basis_sizes, rep.relative_error, rep.effectivity,
               conf[1], conf[2], conf[3], conf[4], rep.speedup]
        rows.append(row)
        print("\t".join("n/a" if v is None else f"{v:.4g}" if isinstance(v, float) else str(v)
                        for v in row), flush=True)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
