"""Error-budget allocation across blocks by equalized marginal power.

Each block contributes a concave, non-decreasing power curve alpha ->
pi3(alpha).  At the optimal allocation every active block has the same
marginal power per unit of budget (the shared shadow price mu*), found by
bisecting mu* against the budget:

* Bonferroni budget: sum of levels = alpha, right-inverse
  g_b(mu) = sup{a : d+pi3_b(a) >= mu}.
* Sidak budget: product of (1 - level) = 1 - alpha, weighted right-inverse
  with the factor (1 - a), bisected on the log scale.

Curves are sampled and concavified (adjacent slopes pooled non-increasing)
before derivative queries, since solver and quadrature noise can introduce
tiny concavity violations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .densities import AltDensity
from .quadrature import QGrid
from .solver import SolverParams, default_grid, pi3_value

__all__ = [
    "ValueCurve",
    "AllocationResult",
    "build_value_curve",
    "right_derivative",
    "curve_value",
    "kkt_bisection_bonferroni",
    "kkt_bisection_sidak",
    "uniform_splits",
    "curves_to_json",
    "curves_from_json",
]


@dataclass(frozen=True)
class ValueCurve:
    """Sampled concave per-block power curve with an anchor at (0, 0).

    ``alphas``/``values`` include the anchor; ``slopes[i]`` is the
    concavified right derivative on (alphas[i], alphas[i+1]].
    """

    alphas: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    block_id: str = "block"

    def __post_init__(self):
        self.alphas.setflags(write=False)
        self.values.setflags(write=False)
        self.slopes.setflags(write=False)


@dataclass(frozen=True)
class AllocationResult:
    levels: np.ndarray
    mu_star: float
    budget: str  # bonferroni | sidak
    binding: bool


def _pava_nonincreasing(values, weights):
    vals, wts, cnts = [], [], []
    for v, w in zip(values, weights):
        vals.append(float(v))
        wts.append(float(w))
        cnts.append(1)
        while len(vals) > 1 and vals[-2] < vals[-1]:
            w_new = wts[-2] + wts[-1]
            vals[-2] = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / w_new
            wts[-2] = w_new
            cnts[-2] += cnts[-1]
            del vals[-1], wts[-1], cnts[-1]
    return np.repeat(vals, cnts)


def make_curve(alphas, values, block_id="block") -> ValueCurve:
    """Anchor at (0, 0), pool slopes non-increasing, rebuild values."""
    a = np.asarray(alphas, dtype=float)
    v = np.asarray(values, dtype=float)
    if a.ndim != 1 or a.size == 0 or np.any(np.diff(a) <= 0):
        raise ValueError("alphas must be strictly increasing and non-empty")
    if np.any(a <= 0) or np.any(a >= 1):
        raise ValueError("alphas must lie in (0, 1)")
    a = np.concatenate(([0.0], a))
    v = np.concatenate(([0.0], np.maximum.accumulate(np.maximum(v, 0.0))))
    widths = np.diff(a)
    slopes = _pava_nonincreasing(np.diff(v) / widths, widths)
    rebuilt = np.concatenate(([0.0], np.cumsum(slopes * widths)))
    return ValueCurve(alphas=a, values=rebuilt, slopes=slopes, block_id=block_id)


def default_alpha_grid(alpha_total: float, n_blocks: int, n_points: int = 12):
    """Log-spaced curve knots resolving the steep small-alpha region."""
    lo = alpha_total / (10.0 * n_blocks)
    hi = min(0.5, 5.0 * alpha_total)
    return np.geomspace(lo, hi, n_points)


def build_value_curve(g: AltDensity, alpha_grid=None, grid: QGrid | None = None,
                      params: SolverParams = SolverParams(),
                      block_id: str = "block", alpha_total: float = 0.05,
                      n_blocks: int = 10) -> ValueCurve:
    """Sample pi3 on the alpha grid and concavify."""
    if alpha_grid is None:
        alpha_grid = default_alpha_grid(alpha_total, n_blocks)
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    if grid is None:
        grid = default_grid(g)
    values = []
    for a in alpha_grid:
        try:
            values.append(pi3_value(float(a), g, grid, params))
        except Exception as exc:
            raise RuntimeError(f"value solve failed at alpha={a}: {exc}") from exc
    return make_curve(alpha_grid, values, block_id=block_id)


def right_derivative(curve: ValueCurve, alpha: float) -> float:
    """Slope of the concavified curve on the segment to the right of alpha.

    Beyond the last knot the flat extension has derivative 0.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if alpha >= curve.alphas[-1]:
        return 0.0
    idx = int(np.searchsorted(curve.alphas, alpha, side="right")) - 1
    return float(curve.slopes[min(idx, curve.slopes.size - 1)])


def curve_value(curve: ValueCurve, alpha: float) -> float:
    """Piecewise-linear curve value with flat extension."""
    a = min(max(alpha, 0.0), float(curve.alphas[-1]))
    return float(np.interp(a, curve.alphas, curve.values))


def _right_inverse(curve: ValueCurve, mu: float, cap: float) -> float:
    """sup{a in [0, cap] : d+pi3(a) >= mu}; flat tails resolve to the sup."""
    if mu <= 0.0:
        return cap
    feasible = curve.slopes >= mu
    if not feasible.any():
        return 0.0
    idx = int(np.max(np.nonzero(feasible)[0]))
    return min(float(curve.alphas[idx + 1]), cap)


def _right_inverse_sidak(curve: ValueCurve, mu: float) -> float:
    """sup{a in [0, 1] : (1 - a) d+pi3(a) >= mu}."""
    if mu <= 0.0:
        return 1.0
    best = 0.0
    for i, s in enumerate(curve.slopes):
        left, right = float(curve.alphas[i]), float(curve.alphas[i + 1])
        if s <= 0:
            break
        if (1.0 - left) * s < mu:
            break
        if (1.0 - right) * s >= mu:
            best = right
        else:
            best = max(best, 1.0 - mu / s)
    return best


def uniform_splits(alpha: float, n_blocks: int):
    """(alpha/B, 1 - (1-alpha)^(1/B)): the homogeneous optimal splits."""
    if n_blocks < 1:
        raise ValueError("need at least one block")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return alpha / n_blocks, 1.0 - (1.0 - alpha) ** (1.0 / n_blocks)


def _bisect_budget(curves, alpha, eps, inverse, total):
    """Shared outer bisection on the shadow price mu*."""
    mu_hi = max(float(c.slopes[0]) if c.slopes.size else 0.0 for c in curves)
    if mu_hi <= 0.0:
        return 0.0, np.array([inverse(c, 0.0) for c in curves])
    lo, hi = 0.0, mu_hi
    if total(np.array([inverse(c, hi) for c in curves])) > alpha:
        # steepest observed slope still over-spends: cap binds at mu_hi
        return hi, np.array([inverse(c, hi) for c in curves])
    max_iter = int(np.ceil(np.log2(max(mu_hi / eps, 2.0)))) + 2
    mu = hi
    for _ in range(max_iter):
        mu = 0.5 * (lo + hi)
        levels = np.array([inverse(c, mu) for c in curves])
        spent = total(levels)
        if abs(spent - alpha) <= eps:
            return mu, levels
        if spent > alpha:
            lo = mu
        else:
            hi = mu
        if hi - lo < eps:
            break
    mu = hi
    return mu, np.array([inverse(c, mu) for c in curves])


def kkt_bisection_bonferroni(curves, alpha: float, eps: float = 1e-6
                             ) -> AllocationResult:
    """Equalized-marginal allocation under the sum budget.

    Levels are the right-inverses at the bisected shadow price, rescaled
    proportionally so the budget binds exactly.
    """
    curves = list(curves)
    if not curves:
        raise ValueError("need at least one curve")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")

    def inverse(c, mu):
        return _right_inverse(c, mu, cap=alpha)

    mu, levels = _bisect_budget(curves, alpha, eps, inverse, total=np.sum)
    spent = float(levels.sum())
    if spent > 0:
        levels = levels * (alpha / spent)
    else:
        levels = np.full(len(curves), alpha / len(curves))
    return AllocationResult(levels=levels, mu_star=float(mu),
                            budget="bonferroni", binding=True)


def kkt_bisection_sidak(curves, alpha: float, eps: float = 1e-6
                        ) -> AllocationResult:
    """Weighted equalized-marginal allocation under the product budget."""
    curves = list(curves)
    if not curves:
        raise ValueError("need at least one curve")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    target = -np.log1p(-alpha)

    def total(levels):
        return float(np.sum(-np.log1p(-np.minimum(levels, 1 - 1e-12))))

    mu, levels = _bisect_budget(curves, target, eps, _right_inverse_sidak, total)
    logs = -np.log1p(-np.minimum(levels, 1 - 1e-12))
    spent = float(logs.sum())
    if spent > 0:
        levels = -np.expm1(-logs * (target / spent))
    else:
        levels = np.full(len(curves), 1.0 - (1.0 - alpha) ** (1.0 / len(curves)))
    return AllocationResult(levels=levels, mu_star=float(mu), budget="sidak",
                            binding=True)


# ---------------------------------------------------------------------------
# serialization


def curves_to_json(curves) -> str:
    recs = [{"block_id": c.block_id,
             "alphas": [float(a) for a in c.alphas[1:]],
             "values": [float(v) for v in c.values[1:]]} for c in curves]
    return json.dumps(recs, indent=2)


def curves_from_json(text: str):
    return [make_curve(r["alphas"], r["values"], block_id=r.get("block_id", "block"))
            for r in json.loads(text)]
