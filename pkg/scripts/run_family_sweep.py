#!/usr/bin/env python3
"""Signal-strength sweep across p-value families at K=30.

Writes one sweep CSV per family (truncnorm theta grid, tdist df grid,
sparse-block truncnorm) with the full method roster; render with
`plots family_panels <csv> <png>`.
"""

import argparse

from boostfwer.simulate import SimConfig, sweep, write_sweep_csv

METHODS = ("boost", "bonferroni", "sidak_ss", "holm", "hochberg", "hommel",
           "sidak_sd", "block_holm", "block_hochberg", "closed_fisher",
           "minp_resampling")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-rep", type=int, default=3000)
    ap.add_argument("--seed", type=int, required=True)
    ap.add_argument("--out", default="family_sweep.csv")
    args = ap.parse_args()

    configs = []
    for theta in (-0.5, -1.0, -1.5, -2.0, -2.5):
        configs.append(SimConfig(
            family={"kind": "truncnorm", "params": {"theta": theta}},
            K=30, B=10, alpha=0.05, methods=METHODS,
            n_rep=args.n_rep, seed=args.seed))
    for df in (4, 6, 10):
        configs.append(SimConfig(
            family={"kind": "tdist", "params": {"df": df}},
            K=30, B=10, alpha=0.05, methods=METHODS,
            n_rep=args.n_rep, seed=args.seed))
    for theta in (-1.5, -2.0, -2.5):
        configs.append(SimConfig(
            family={"kind": "truncnorm", "params": {"theta": theta}},
            K=30, B=10, alpha=0.05, methods=METHODS,
            configuration="sparse_blocks",
            n_rep=args.n_rep, seed=args.seed))

    write_sweep_csv(sweep(configs), args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
