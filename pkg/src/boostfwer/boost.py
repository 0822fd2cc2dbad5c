"""End-to-end blockwise procedures on p-value vectors.

``boost_run`` applies the solved size-3 optimal rule block by block: sort each
block's triple, evaluate the nested decisions, reject the smallest p-values.
``plugin_boost_run`` is the sample-split variant for unknown alternative
density: fit a Grenander estimate on the estimation fold, then test only the
testing-fold blocks at a uniform split of the (optionally deflated) budget.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .densities import AltDensity, fit_grenander, grenander_density
from .quadrature import QGrid
from .solver import (
    K3Rule,
    K3SolveError,
    MuVector,
    SolverParams,
    compute_optimal_mu,
    default_grid,
)

__all__ = [
    "BlockPartition",
    "RejectionSet",
    "FoldSplit",
    "boost_run",
    "deflate_alpha",
    "plugin_boost_run",
    "read_pvalues_csv",
    "rejections_to_json",
]


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint size-3 blocks covering all hypothesis ids."""

    blocks: dict  # block_id -> (id, id, id)

    def __post_init__(self):
        seen = set()
        for bid, members in self.blocks.items():
            if len(members) != 3:
                raise ValueError(f"block {bid!r} has {len(members)} members, need 3")
            for m in members:
                if m in seen:
                    raise ValueError(f"hypothesis {m!r} appears in two blocks")
                seen.add(m)

    @staticmethod
    def from_assignments(assignments: dict) -> "BlockPartition":
        groups: dict = {}
        for hid, bid in assignments.items():
            groups.setdefault(bid, []).append(hid)
        return BlockPartition({b: tuple(sorted(ids)) for b, ids in groups.items()})

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def hypothesis_ids(self):
        return [h for members in self.blocks.values() for h in members]

    def block_ids(self):
        return sorted(self.blocks, key=str)


@dataclass(frozen=True)
class RejectionSet:
    rejected: frozenset
    per_block: dict  # block_id -> rejection count in {0,1,2,3}

    def __len__(self):
        return len(self.rejected)


@dataclass(frozen=True)
class FoldSplit:
    """Estimation/testing split of the blocks; disjoint, testing non-empty."""

    estimation: tuple
    testing: tuple

    def __post_init__(self):
        est, tst = set(self.estimation), set(self.testing)
        if est & tst:
            raise ValueError("estimation and testing folds overlap")
        if not tst:
            raise ValueError("testing fold must be non-empty")

    @staticmethod
    def halves(partition: BlockPartition, swap: bool = False) -> "FoldSplit":
        ids = partition.block_ids()
        cut = (len(ids) + 1) // 2
        first, second = tuple(ids[:cut]), tuple(ids[cut:])
        if swap:
            first, second = second, first
        return FoldSplit(estimation=first, testing=second)


def _resolve_levels(levels, block_ids):
    if np.isscalar(levels):
        return {b: float(levels) for b in block_ids}
    return {b: float(levels[b]) for b in block_ids}


def boost_run(pvalues: dict, partition: BlockPartition, levels,
              g: AltDensity, grid: QGrid | None = None,
              params: SolverParams = SolverParams(),
              cache: bool = True) -> RejectionSet:
    """Blockwise optimal testing at the given per-block levels.

    ``levels`` is a scalar (shared level, single solve reused across blocks)
    or a mapping block_id -> level.  Ties among equal p-values break by
    hypothesis id.
    """
    ids = set(partition.hypothesis_ids)
    missing = ids - set(pvalues)
    if missing:
        raise ValueError(f"p-values missing for hypotheses {sorted(missing)!r}")
    vals = np.array([pvalues[h] for h in ids], dtype=float)
    if np.any((vals < 0) | (vals > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    level_map = _resolve_levels(levels, partition.block_ids())
    if any(v <= 0 for v in level_map.values()):
        raise ValueError("per-block levels must be positive")
    if sum(level_map.values()) >= 1.0:
        warnings.warn("per-block levels sum to >= 1; no global budget can "
                      "certify this allocation", stacklevel=2)
    if grid is None:
        grid = default_grid(g)

    rejected = set()
    per_block = {}
    for bid in partition.block_ids():
        members = partition.blocks[bid]
        triple = sorted(members, key=lambda h: (pvalues[h], str(h)))
        u = np.array([pvalues[h] for h in triple])
        mu, diag = compute_optimal_mu(level_map[bid], g, grid, params,
                                      cache=cache)
        if diag.flag != "success":
            raise K3SolveError(diag.__class__(
                diag.flag, f"block {bid!r}: {diag.message}",
                diag.outer_iterations, diag.final_residuals))
        d1, d2, d3 = K3Rule(mu, g, grid).decide(u)
        r = d1 + d2 + d3
        per_block[bid] = int(r)
        rejected.update(triple[:r])
    return RejectionSet(rejected=frozenset(rejected), per_block=per_block)


def deflate_alpha(alpha: float, L3: float, B_T: int, n: int) -> float:
    """alpha - L3 * B_T * (log n / n)^(1/3); errors if nothing is left."""
    if n < 2:
        raise ValueError("need n >= 2 estimation samples")
    r_n = (np.log(n) / n) ** (1.0 / 3.0)
    deflated = alpha - L3 * B_T * r_n
    if deflated <= 0:
        raise ValueError(
            f"deflation exhausts the budget (alpha={alpha}, penalty="
            f"{L3 * B_T * r_n:.4g}); increase n or decrease L3")
    return float(deflated)


def plugin_boost_run(pvalues: dict, partition: BlockPartition, fold: FoldSplit,
                     alpha: float, budget: str = "bonferroni",
                     estimator: str = "grenander",
                     deflate_L3: float | None = None,
                     grid: QGrid | None = None,
                     params: SolverParams = SolverParams()) -> RejectionSet:
    """Sample-split blockwise testing with an estimated alternative density.

    Fits the density on all estimation-fold p-values pooled, splits the
    (optionally deflated) budget uniformly over testing blocks, and runs the
    blockwise rule on the testing fold only.
    """
    if estimator != "grenander":
        raise ValueError(f"unknown estimator {estimator!r}")
    if budget not in ("bonferroni", "sidak"):
        raise ValueError(f"unknown budget {budget!r}")
    unknown = [b for b in (*fold.estimation, *fold.testing)
               if b not in partition.blocks]
    if unknown:
        raise ValueError(f"fold names unknown blocks {unknown!r}")

    est_samples = np.array([pvalues[h] for b in fold.estimation
                            for h in partition.blocks[b]], dtype=float)
    if est_samples.size < 3:
        raise ValueError("estimation fold too small for a usable fit "
                         f"({est_samples.size} p-values, need >= 3)")
    ghat = grenander_density(fit_grenander(est_samples))

    b_t = len(fold.testing)
    alpha_eff = alpha
    if deflate_L3 is not None:
        alpha_eff = deflate_alpha(alpha, deflate_L3, b_t, est_samples.size)
    if budget == "bonferroni":
        level = alpha_eff / b_t
    else:
        level = 1.0 - (1.0 - alpha_eff) ** (1.0 / b_t)

    testing_partition = BlockPartition(
        {b: partition.blocks[b] for b in fold.testing})
    test_pvals = {h: pvalues[h] for b in fold.testing
                  for h in partition.blocks[b]}
    if grid is None:
        grid = default_grid(ghat)
    return boost_run(test_pvals, testing_partition, level, ghat, grid, params)


# ---------------------------------------------------------------------------
# file formats


def read_pvalues_csv(path):
    """Read the `hypothesis_id, block_id, p_value` CSV."""
    pvalues: dict = {}
    assignments: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"hypothesis_id", "block_id", "p_value"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(
                f"{path}: need columns hypothesis_id, block_id, p_value, "
                f"got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            hid = row["hypothesis_id"].strip()
            try:
                p = float(row["p_value"])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad p_value "
                                 f"{row['p_value']!r}") from exc
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{path}:{lineno}: p_value {p} outside [0, 1]")
            if hid in pvalues:
                raise ValueError(f"{path}:{lineno}: duplicate hypothesis {hid!r}")
            pvalues[hid] = p
            assignments[hid] = row["block_id"].strip()
    return pvalues, BlockPartition.from_assignments(assignments)


def rejections_to_json(result: RejectionSet, extra: dict | None = None) -> str:
    rec = {
        "rejected": sorted(result.rejected, key=str),
        "per_block": {str(k): v for k, v in sorted(result.per_block.items(),
                                                   key=lambda kv: str(kv[0]))},
    }
    if extra:
        rec.update(extra)
    return json.dumps(rec, indent=2)
