"""Strong-FWER comparison procedures plus the BH false-discovery reference.

All functions take a sequence of p-values and return the set of rejected
indices (0-based positions).  Block-structured methods additionally take a
BlockPartition over those positions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .boost import BlockPartition

__all__ = [
    "BaselineSpec",
    "stepwise",
    "block_gatekeeping",
    "closed_fisher",
    "tree_closure",
    "minp_resampling",
    "bh_fdr",
    "run_baseline",
    "simes_p",
    "STEPWISE_METHODS",
    "ALL_METHODS",
]

STEPWISE_METHODS = ("bonferroni", "sidak_ss", "holm", "hochberg", "hommel",
                    "sidak_sd")
ALL_METHODS = STEPWISE_METHODS + (
    "block_holm", "block_hochberg", "closed_fisher", "meinshausen",
    "hartog_evalue", "minp_resampling", "bh_fdr")

P_FLOOR = 1e-300


@dataclass(frozen=True)
class BaselineSpec:
    method: str
    alpha: float
    partition: BlockPartition | None = None

    def __post_init__(self):
        if self.method not in ALL_METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method in ("block_holm", "block_hochberg", "meinshausen",
                           "hartog_evalue") and self.partition is None:
            raise ValueError(f"{self.method} requires a partition")


def _as_pvals(pvalues) -> np.ndarray:
    p = np.asarray(pvalues, dtype=float)
    if p.ndim != 1:
        raise ValueError("p-values must be a flat sequence")
    if p.size and (p.min() < 0 or p.max() > 1):
        raise ValueError("p-values must lie in [0, 1]")
    return p


def simes_p(pvalues) -> float:
    """Simes combination: min over k of m p_(k) / k."""
    p = np.sort(_as_pvals(pvalues))
    m = p.size
    return float(np.min(m * p / np.arange(1, m + 1)))


# ---------------------------------------------------------------------------
# classical stepwise rules


def stepwise(method: str, pvalues, alpha: float) -> set:
    """Bonferroni / Sidak single-step, Holm / Hochberg / Sidak step-down,
    and Hommel (exact Simes closure)."""
    p = _as_pvals(pvalues)
    m = p.size
    if m == 0:
        return set()
    order = np.argsort(p, kind="stable")
    ps = p[order]

    if method == "bonferroni":
        return set(np.nonzero(p <= alpha / m)[0])
    if method == "sidak_ss":
        return set(np.nonzero(p <= 1 - (1 - alpha) ** (1 / m))[0])
    if method == "holm":
        thresh = alpha / (m - np.arange(m))
        failing = np.nonzero(ps > thresh)[0]
        k = failing[0] if failing.size else m
        return set(order[:k])
    if method == "sidak_sd":
        thresh = 1 - (1 - alpha) ** (1 / (m - np.arange(m)))
        failing = np.nonzero(ps > thresh)[0]
        k = failing[0] if failing.size else m
        return set(order[:k])
    if method == "hochberg":
        thresh = alpha / (m - np.arange(m))
        passing = np.nonzero(ps <= thresh)[0]
        if passing.size == 0:
            return set()
        return set(order[:passing[-1] + 1])
    if method == "hommel":
        return _closed_simes(p, alpha)
    raise ValueError(f"unknown stepwise method {method!r}")


def _worst_subset_tables(q: np.ndarray):
    """Rank tables for least-favorable closed testing on sorted p-values.

    For each subset size s, the hardest size-s subset containing hypothesis i
    is {p_i} plus the s-1 largest other p-values (local statistics are
    coordinatewise monotone).  Returns the s x k table Q[s-1, k-1] =
    q[m-s+k-1], the k-th smallest member of the size-s top tail, masked with
    NaN outside k <= s.
    """
    m = q.size
    s_idx = np.arange(1, m + 1)[:, None]
    k_idx = np.arange(1, m + 1)[None, :]
    pos = m - s_idx + k_idx - 1
    valid = k_idx <= s_idx
    table = np.where(valid, q[np.clip(pos, 0, m - 1)], np.nan)
    return table, valid


def _closed_simes(p: np.ndarray, alpha: float) -> set:
    """Exact Simes closure (Hommel's procedure), vectorized over subset sizes.

    For the a-th smallest p (value v) and subset size s, the worst subset is
    the top s-1 others plus v.  When s >= m-a that subset is the plain top-s
    tail; otherwise v enters at rank 1 and the tail occupies ranks 2..s.
    """
    m = p.size
    order = np.argsort(p, kind="stable")
    q = p[order]
    table, valid = _worst_subset_tables(q)
    k_row = np.arange(1, m + 1)[None, :]
    s_all = np.arange(1, m + 1)
    ratios = np.where(valid, table / k_row, np.inf)
    tail_simes = s_all * ratios.min(axis=1)
    tail_from_rank2 = np.where(k_row >= 2, ratios, np.inf).min(axis=1)
    # ok_from[j]: every tail-only subset of size >= j+1 passes its Simes test
    ok_from = np.flip(np.logical_and.accumulate(np.flip(tail_simes <= alpha)))
    rejected = set()
    for a in range(m):
        n_case1 = m - a - 1  # sizes s = 1 .. m-a-1 keep v at rank 1
        if n_case1 > 0:
            s_c1 = s_all[:n_case1]
            worst = np.max(s_c1 * np.minimum(q[a], tail_from_rank2[:n_case1]))
            if worst > alpha:
                continue
        if not ok_from[m - a - 1]:
            continue
        rejected.add(int(order[a]))
    return rejected


# ---------------------------------------------------------------------------
# block gatekeeping


def block_gatekeeping(method: str, pvalues, partition: BlockPartition,
                      alpha: float) -> set:
    """Simes-combine each block, step across blocks, reject whole blocks."""
    if method not in ("block_holm", "block_hochberg"):
        raise ValueError(f"unknown block method {method!r}")
    p = _as_pvals(pvalues)
    bids = partition.block_ids()
    block_p = [simes_p([p[h] for h in partition.blocks[b]]) for b in bids]
    inner = "holm" if method == "block_holm" else "hochberg"
    winning = stepwise(inner, block_p, alpha)
    out: set = set()
    for j in winning:
        out.update(partition.blocks[bids[j]])
    return out


# ---------------------------------------------------------------------------
# closed testing with Fisher combination


_CHI2_CRIT_CACHE: dict = {}


def _chi2_crit(alpha: float, m: int) -> np.ndarray:
    key = (float(alpha), m)
    if key not in _CHI2_CRIT_CACHE:
        _CHI2_CRIT_CACHE[key] = chi2.isf(alpha, df=2 * np.arange(1, m + 1))
    return _CHI2_CRIT_CACHE[key]


def closed_fisher(pvalues, alpha: float) -> set:
    """Closed testing with Fisher local tests via the worst-subset shortcut.

    The size-s local test compares -2 sum log p against the chi-square
    upper-alpha quantile at 2s degrees of freedom; the hardest subset of each
    size containing i joins p_i with the s-1 largest other p-values.  Zeros
    are clamped to the smallest positive double.
    """
    p = _as_pvals(pvalues)
    if np.any(p == 0):
        warnings.warn("p-values of 0 clamped to 1e-300 for the log statistic",
                      stacklevel=2)
        p = np.maximum(p, P_FLOOR)
    m = p.size
    if m == 0:
        return set()
    order = np.argsort(p, kind="stable")
    q = p[order]
    logs = np.log(q)
    crit = _chi2_crit(alpha, m)
    # tail_sum[s-1]: sum of logs of the s largest p-values; the 1e-9 slack
    # keeps exact boundary ties (sf(stat, 2s) == alpha) inclusive
    tail_sum = np.concatenate(([0.0], np.cumsum(logs[::-1])))
    tail_stats = -2.0 * tail_sum[1:]
    ok_from = np.flip(np.logical_and.accumulate(np.flip(tail_stats >= crit - 1e-9)))
    rejected = set()
    for a in range(m):
        n_case1 = m - a - 1
        if n_case1 > 0:
            stats = -2.0 * (logs[a] + tail_sum[:n_case1])
            if np.any(stats < crit[:n_case1] - 1e-9):
                continue
        if not ok_from[m - a - 1]:
            continue
        rejected.add(int(order[a]))
    return rejected


# ---------------------------------------------------------------------------
# tree closures on the root / blocks / leaves hierarchy


def tree_closure(method: str, pvalues, partition: BlockPartition,
                 alpha: float) -> set:
    p = _as_pvals(pvalues)
    k = p.size
    bids = partition.block_ids()

    if method == "meinshausen":
        # node weights |v|/K; Simes local test at alpha * weight, children
        # gated on the parent rejecting
        if simes_p(p) > alpha:
            return set()
        out: set = set()
        for b in bids:
            members = partition.blocks[b]
            w = len(members) / k
            if simes_p([p[h] for h in members]) > alpha * w:
                continue
            for h in members:
                if p[h] <= alpha / k:
                    out.add(h)
        return out

    if method == "hartog_evalue":
        # e = p^{-1/2} / 2; node v rejected when its e-sum reaches |v|/alpha
        e = 0.5 / np.sqrt(np.maximum(p, P_FLOOR))
        if e.sum() < k / alpha:
            return set()
        out = set()
        for b in bids:
            members = partition.blocks[b]
            if sum(e[h] for h in members) < len(members) / alpha:
                continue
            out.update(h for h in members if e[h] >= 1.0 / alpha)
        return out

    raise ValueError(f"unknown tree method {method!r}")


# ---------------------------------------------------------------------------
# resampling min-P


def minp_resampling(pvalues, alpha: float, null_sampler, n_resamples: int,
                    seed) -> set:
    """Single-step min-P against a simulated complete null.

    ``null_sampler(rng)`` must return one complete-null p-vector with the
    dependence of the data at hand; the cutoff is the empirical alpha-quantile
    of the resampled minima.
    """
    if n_resamples < 100:
        raise ValueError("need at least 100 resamples")
    p = _as_pvals(pvalues)
    rng = np.random.default_rng(seed)
    minima = np.empty(n_resamples)
    for r in range(n_resamples):
        minima[r] = np.min(null_sampler(rng))
    minima.sort()
    rank = max(int(np.floor(alpha * (n_resamples + 1))), 1)
    cutoff = minima[rank - 1]
    return set(np.nonzero(p <= cutoff)[0])


# ---------------------------------------------------------------------------
# BH reference (false-discovery-rate criterion, not FWER)


def bh_fdr(pvalues, q: float) -> set:
    p = _as_pvals(pvalues)
    m = p.size
    if m == 0:
        return set()
    order = np.argsort(p, kind="stable")
    ps = p[order]
    passing = np.nonzero(ps <= (np.arange(1, m + 1) / m) * q)[0]
    if passing.size == 0:
        return set()
    return set(order[:passing[-1] + 1])


# ---------------------------------------------------------------------------
# dispatcher


def run_baseline(spec: BaselineSpec, pvalues, null_sampler=None,
                 n_resamples: int = 2000, seed=None) -> set:
    m = spec.method
    if m in STEPWISE_METHODS:
        return stepwise(m, pvalues, spec.alpha)
    if m in ("block_holm", "block_hochberg"):
        return block_gatekeeping(m, pvalues, spec.partition, spec.alpha)
    if m == "closed_fisher":
        return closed_fisher(pvalues, spec.alpha)
    if m in ("meinshausen", "hartog_evalue"):
        return tree_closure(m, pvalues, spec.partition, spec.alpha)
    if m == "minp_resampling":
        if null_sampler is None:
            k = len(pvalues)
            null_sampler = lambda rng: rng.random(k)
        if seed is None:
            raise ValueError("minp_resampling requires an explicit seed")
        return minp_resampling(pvalues, spec.alpha, null_sampler, n_resamples,
                               seed)
    if m == "bh_fdr":
        return bh_fdr(pvalues, spec.alpha)
    raise ValueError(f"unknown method {m!r}")
