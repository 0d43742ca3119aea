"""Full-order goal values of the elastodynamics beam for several Lame pairs.

The material of the beam benchmark is a free parameter of this package; this
script shows how strongly the time-averaged clamp traction depends on it.

    python3 scripts/goal_sensitivity.py --pairs 1,1 100,100 1000,1000
"""

import argparse

from more_dwr.cli_io import build_fom, load_preset


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", nargs="+", default=["1,1", "10,10", "100,100", "1000,1000"],
                        help="mu,lambda pairs")
    args = parser.parse_args()
    for pair in args.pairs:
        mu, lam = (float(v) for v in pair.split(","))
        config = load_preset("elasto_3d")
        config.material.mu, config.material.lam = mu, lam
        values, _ = build_fom(config).run_primal()
        print(f"mu={mu:g} lambda={lam:g} J_fom={values.sum():.6e}", flush=True)


if __name__ == "__main__":
    main()
