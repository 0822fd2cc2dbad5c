"""Command-line surface: solve, run, plugin, allocate, baseline, simulate, curves.

Every subcommand is a thin adapter over the library; outputs are JSON (solver
artifacts, rejections, allocations, curves) or CSV (sweeps).  Exit codes:
0 success, 1 computational failure (solver flag message on stderr), 2 usage.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .allocation import (
    build_value_curve,
    curves_from_json,
    curves_to_json,
    kkt_bisection_bonferroni,
    kkt_bisection_sidak,
    uniform_splits,
)
from .baselines import ALL_METHODS, BaselineSpec, run_baseline
from .boost import (
    BlockPartition,
    FoldSplit,
    boost_run,
    plugin_boost_run,
    read_pvalues_csv,
    rejections_to_json,
)
from .densities import (
    beta_density,
    mixnorm_density,
    tdist_density,
    truncnorm_density,
    uniform_density,
)
from .quadrature import build_qgrid
from .simulate import config_from_json, run_experiment, sweep, write_sweep_csv
from .solver import (
    SolverParams,
    artifact_record,
    compute_optimal_mu,
    default_grid,
)

FAMILIES = ("truncnorm", "tdist", "beta", "mixnorm", "uniform")


def _alpha_in_unit(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {value}")
    return value


def _add_family_flags(parser):
    parser.add_argument("--family", choices=FAMILIES, default="truncnorm")
    parser.add_argument("--theta", type=float, default=-2.0,
                        help="location shift for truncnorm/mixnorm")
    parser.add_argument("--trunc-bound", type=float, default=6.0)
    parser.add_argument("--df", type=float, default=10.0, help="tdist dof")
    parser.add_argument("--s", type=float, default=0.5, help="beta shape")
    parser.add_argument("--spread", type=float, default=0.5,
                        help="mixnorm component half-separation")


def _density_from_args(args):
    if args.family == "truncnorm":
        return truncnorm_density(args.theta, args.trunc_bound)
    if args.family == "tdist":
        return tdist_density(args.df)
    if args.family == "beta":
        return beta_density(args.s)
    if args.family == "mixnorm":
        return mixnorm_density(args.theta, args.spread, args.trunc_bound)
    return uniform_density()


def _add_grid_flags(parser):
    parser.add_argument("--n-per-axis", type=int, default=70)
    parser.add_argument("--grid-mode", choices=("qmc", "midpoint", "random"),
                        default="qmc")


def _add_solver_flags(parser):
    parser.add_argument("--delta", type=float, default=1e-7)
    parser.add_argument("--epsilon", type=float, default=1e-6)
    parser.add_argument("--t-max", type=int, default=50)
    parser.add_argument("--u-max", type=float, default=1e6)


def _solver_params(args):
    return SolverParams(delta=args.delta, epsilon=args.epsilon,
                        t_max=args.t_max, u_max=args.u_max)


def _emit(text, out_path):
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _cmd_solve(args):
    density = _density_from_args(args)
    grid = build_qgrid(args.n_per_axis, mode=args.grid_mode, warp=density)
    mu, diag = compute_optimal_mu(args.alpha, density, grid,
                                  _solver_params(args))
    record = artifact_record(args.alpha, density, grid, mu, diag)
    _emit(json.dumps(record, indent=2), args.out)
    if diag.flag != "success":
        print(diag.message or diag.flag, file=sys.stderr)
        return 1
    return 0


def _levels_for(args, curves_by_block, block_ids, alpha):
    if args.budget == "bonferroni":
        return {b: alpha / len(block_ids) for b in block_ids}
    if args.budget == "sidak":
        level = uniform_splits(alpha, len(block_ids))[1]
        return {b: level for b in block_ids}
    res = kkt_bisection_bonferroni([curves_by_block[b] for b in block_ids],
                                   alpha)
    return dict(zip(block_ids, (float(x) for x in res.levels)))


def _cmd_run(args):
    pvalues, partition = read_pvalues_csv(args.pvalues)
    density = _density_from_args(args)
    grid = build_qgrid(args.n_per_axis, mode=args.grid_mode, warp=density)
    block_ids = partition.block_ids()
    curves = {}
    if args.budget == "kkt":
        curve = build_value_curve(density, grid=grid, alpha_total=args.alpha,
                                  n_blocks=len(block_ids))
        curves = {b: curve for b in block_ids}
    levels = _levels_for(args, curves, block_ids, args.alpha)
    result = boost_run(pvalues, partition, levels, density, grid,
                       _solver_params(args))
    _emit(rejections_to_json(result, extra={
        "alpha": args.alpha, "budget": args.budget, "levels": levels,
        "density": density.to_spec(),
    }), args.out)
    return 0


def _cmd_plugin(args):
    pvalues, partition = read_pvalues_csv(args.pvalues)
    fold = FoldSplit.halves(partition, swap=args.fold == "second")
    result = plugin_boost_run(
        pvalues, partition, fold, args.alpha, budget=args.budget,
        deflate_L3=args.deflate_L3,
        grid=build_qgrid(args.n_per_axis, mode=args.grid_mode),
        params=_solver_params(args))
    _emit(rejections_to_json(result, extra={
        "alpha": args.alpha, "budget": args.budget,
        "estimation_fold": list(fold.estimation),
        "testing_fold": list(fold.testing),
    }), args.out)
    return 0


def _cmd_allocate(args):
    if args.curves:
        with open(args.curves) as fh:
            curves = curves_from_json(fh.read())
    else:
        thetas = [float(x) for x in args.thetas.split(",")]
        curves = []
        for theta in thetas:
            density = truncnorm_density(theta, args.trunc_bound)
            grid = default_grid(density, n_per_axis=args.n_per_axis)
            curves.append(build_value_curve(
                density, grid=grid, alpha_total=args.alpha,
                n_blocks=len(thetas), block_id=f"theta{theta}"))
    solver = (kkt_bisection_sidak if args.budget == "sidak"
              else kkt_bisection_bonferroni)
    res = solver(curves, args.alpha, eps=args.eps)
    _emit(json.dumps({
        "budget": res.budget,
        "mu_star": res.mu_star,
        "binding": res.binding,
        "levels": {c.block_id: float(l) for c, l in zip(curves, res.levels)},
    }, indent=2), args.out)
    return 0


def _cmd_curves(args):
    thetas = [float(x) for x in args.thetas.split(",")]
    alpha_grid = None
    if args.alpha_grid:
        alpha_grid = [float(x) for x in args.alpha_grid.split(",")]
    curves = []
    for theta in thetas:
        density = truncnorm_density(theta, args.trunc_bound)
        grid = default_grid(density, n_per_axis=args.n_per_axis)
        curves.append(build_value_curve(
            density, alpha_grid=alpha_grid, grid=grid,
            alpha_total=args.alpha, n_blocks=len(thetas),
            block_id=f"theta{theta}"))
    _emit(curves_to_json(curves), args.out)
    return 0


def _cmd_baseline(args):
    pvalues, partition = read_pvalues_csv(args.pvalues)
    if args.partition:
        _, partition = read_pvalues_csv(args.partition)
    ids = sorted(pvalues, key=str)
    p = [pvalues[h] for h in ids]
    index_partition = None
    if args.method in ("block_holm", "block_hochberg", "meinshausen",
                       "hartog_evalue"):
        pos = {h: i for i, h in enumerate(ids)}
        index_partition = BlockPartition(
            {b: tuple(pos[h] for h in members)
             for b, members in partition.blocks.items()})
    spec = BaselineSpec(args.method, args.alpha, index_partition)
    rejected = run_baseline(spec, p, n_resamples=args.n_resamples,
                            seed=args.seed)
    per_block = {}
    for b, members in partition.blocks.items():
        per_block[b] = sum(1 for h in members if ids.index(h) in rejected)
    _emit(json.dumps({
        "method": args.method, "alpha": args.alpha,
        "rejected": sorted(ids[i] for i in rejected),
        "per_block": {str(k): per_block[k]
                      for k in sorted(per_block, key=str)},
    }, indent=2), args.out)
    return 0


def _cmd_simulate(args):
    with open(args.config) as fh:
        doc = json.load(fh)
    doc["seed"] = args.seed
    cfg = config_from_json(doc)
    rows = sweep([cfg], threads=args.threads)
    if args.out:
        write_sweep_csv(rows, args.out)
    else:
        write_sweep_csv(rows, sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boostfwer",
        description="Blockwise power-optimal strong-FWER testing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the size-3 block optimizer")
    p.add_argument("--alpha", type=_alpha_in_unit, required=True)
    _add_family_flags(p)
    _add_grid_flags(p)
    _add_solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("run", help="apply the blockwise procedure to a CSV")
    p.add_argument("--pvalues", required=True)
    p.add_argument("--alpha", type=_alpha_in_unit, required=True)
    p.add_argument("--budget", choices=("bonferroni", "sidak", "kkt"),
                   default="bonferroni")
    _add_family_flags(p)
    _add_grid_flags(p)
    _add_solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("plugin", help="sample-split run with estimated density")
    p.add_argument("--pvalues", required=True)
    p.add_argument("--alpha", type=_alpha_in_unit, required=True)
    p.add_argument("--budget", choices=("bonferroni", "sidak"),
                   default="bonferroni")
    p.add_argument("--fold", choices=("first", "second"), default="first",
                   help="which half estimates the density")
    p.add_argument("--deflate-L3", type=float, default=None,
                   help="enable level deflation with this constant")
    _add_grid_flags(p)
    _add_solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_plugin)

    p = sub.add_parser("allocate", help="equalized-marginal budget split")
    p.add_argument("--alpha", type=_alpha_in_unit, required=True)
    p.add_argument("--budget", choices=("bonferroni", "sidak"),
                   default="bonferroni")
    p.add_argument("--curves", help="JSON file of per-block value curves")
    p.add_argument("--thetas", default="-1.5,-2.0",
                   help="comma list; used when --curves is absent")
    p.add_argument("--trunc-bound", type=float, default=6.0)
    p.add_argument("--n-per-axis", type=int, default=40)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_allocate)

    p = sub.add_parser("curves", help="sample per-block power curves")
    p.add_argument("--alpha", type=_alpha_in_unit, default=0.05)
    p.add_argument("--thetas", default="-1.5,-2.0")
    p.add_argument("--alpha-grid", help="comma list of curve knots")
    p.add_argument("--trunc-bound", type=float, default=6.0)
    p.add_argument("--n-per-axis", type=int, default=40)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_curves)

    p = sub.add_parser("baseline", help="run one comparison procedure")
    p.add_argument("--method", choices=ALL_METHODS, required=True)
    p.add_argument("--alpha", type=_alpha_in_unit, required=True)
    p.add_argument("--pvalues", required=True)
    p.add_argument("--partition", help="optional CSV overriding block ids")
    p.add_argument("--n-resamples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=None,
                   help="required for resampling methods")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("simulate", help="run a Monte-Carlo experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True,
                   help="explicit seed; randomized paths never default")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        parser.exit(2, f"error: {exc}\n")
    except Exception as exc:  # computational failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
