"""Run built-in presets in verification mode and write their CSV traces.

    python3 scripts/run_presets.py                 # all presets
    python3 scripts/run_presets.py heat_1d --out results
"""

import argparse
import logging
from pathlib import Path

from more_dwr.cli_io import list_presets, load_preset, run_experiment, write_traces


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("names", nargs="*", help="preset names (default: all)")
    parser.add_argument("--out", default="results", help="parent output directory")
    parser.add_argument("--adaptive-only", action="store_true", help="skip the FOM reference")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    for name in args.names or list_presets():
        config = load_preset(name)
        config.mode = "adaptive" if args.adaptive_only else "verification"
        report = run_experiment(config)
        write_traces(report, Path(args.out) / name)
        line = f"{name}: J_rom={report.J_rom:.6e} fom_solves={report.fom_solves} " \
               f"bases={report.final_basis_sizes[0]}|{report.final_basis_sizes[1]}"
        if report.J_fom is not None:
            eff = report.effectivity
            line += (f" J_fom={report.J_fom:.6e} rel_err={report.relative_error:.4%}"
                     f" effectivity={'n/a' if eff is None else f'{eff:.4f}'}"
                     f" speedup={report.speedup:.2f} confusion={report.confusion}")
        print(line, flush=True)


if __name__ == "__main__":
    main()
