"""Alternative p-value density models and the Grenander monotone estimator.

Every family models the p-value of a single test: uniform under the null,
density ``g`` on [0, 1] under the alternative.  The families mirror common
signal models (shifted truncated normal, Student-t, Beta, Gaussian location
mixture) plus a nonparametric monotone fit used by the plug-in procedure.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import ndtr, ndtri
from scipy.stats import t as student_t

__all__ = [
    "AltDensity",
    "GrenanderFit",
    "truncnorm_density",
    "tdist_density",
    "beta_density",
    "mixnorm_density",
    "uniform_density",
    "grenander_density",
    "fit_grenander",
    "cdf_G",
    "sup_norm_distance",
    "density_from_spec",
]

# grid used to bound sup(g) for families without a closed-form maximum;
# midpoints avoid the open endpoints where Beta/t densities diverge
_SUP_GRID = (np.arange(1000) + 0.5) / 1000.0


@dataclass(frozen=True)
class AltDensity:
    """A p-value density on [0, 1] with evaluator, CDF, quantile and sup bound."""

    kind: str
    params: dict
    sup_bound: float
    monotone_nonincreasing: bool
    _pdf: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _cdf: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _ppf: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def pdf(self, u):
        """Density g(u); vectorized over u in [0, 1]."""
        return self._pdf(np.asarray(u, dtype=float))

    def cdf(self, u):
        """G(u) = integral of g from 0 to u."""
        return self._cdf(np.asarray(u, dtype=float))

    def ppf(self, q):
        """Quantile function, the inverse of G."""
        return self._ppf(np.asarray(q, dtype=float))

    @property
    def key(self) -> tuple:
        """Hashable identity used by solver and grid caches."""
        items = []
        for k in sorted(self.params):
            v = self.params[k]
            if isinstance(v, (list, tuple, np.ndarray)):
                items.append((k, tuple(np.asarray(v, dtype=float).ravel())))
            else:
                items.append((k, float(v)))
        return (self.kind, tuple(items))

    def to_spec(self) -> dict:
        """JSON-serializable record {kind, params}."""
        params = {}
        for k, v in self.params.items():
            if isinstance(v, (list, tuple, np.ndarray)):
                params[k] = [float(x) for x in np.asarray(v).ravel()]
            else:
                params[k] = float(v)
        return {"kind": self.kind, "params": params}


def cdf_G(g: AltDensity, alpha: float) -> float:
    """CDF G(alpha) of the alternative p-value density."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return float(g.cdf(alpha))


def sup_norm_distance(g: AltDensity, ghat: AltDensity, grid_lo: float,
                      grid_hi: float, n_points: int) -> float:
    """Max of |g - ghat| on an evenly spaced grid in [grid_lo, grid_hi]."""
    if not (0.0 <= grid_lo < grid_hi <= 1.0):
        raise ValueError("need 0 <= grid_lo < grid_hi <= 1")
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    u = np.linspace(grid_lo, grid_hi, n_points)
    return float(np.max(np.abs(g.pdf(u) - ghat.pdf(u))))


# ---------------------------------------------------------------------------
# truncated normal family


def _truncnorm_pieces(theta: float, bound: float):
    z0 = ndtr(bound) - ndtr(-bound)
    z1 = ndtr(bound - theta) - ndtr(-bound - theta)
    lo0 = ndtr(-bound)
    lo1 = ndtr(-bound - theta)

    def x_of_u(u):
        return ndtri(lo0 + np.clip(u, 0.0, 1.0) * z0)

    return z0, z1, lo0, lo1, x_of_u


def truncnorm_density(theta: float, trunc_bound: float = 6.0) -> AltDensity:
    """One-sided truncated-normal alternative on [-trunc_bound, trunc_bound].

    Null statistic is N(0,1) truncated to the interval, alternative is
    N(theta,1) truncated likewise, and the p-value is the null CDF of the
    statistic.  The induced density is g(u) = (Z0/Z1) exp(theta x(u) -
    theta^2/2) with x(u) the null quantile, strictly decreasing for theta < 0,
    so the sup bound is g(0).
    """
    if theta >= 0:
        raise ValueError("one-sided model requires a left shift: theta < 0")
    if trunc_bound <= 0:
        raise ValueError("trunc_bound must be positive")
    z0, z1, lo0, lo1, x_of_u = _truncnorm_pieces(theta, trunc_bound)
    c = np.log(z0 / z1) - 0.5 * theta * theta

    def pdf(u):
        return np.exp(c + theta * x_of_u(u))

    def cdf(u):
        return (ndtr(x_of_u(u) - theta) - lo1) / z1

    def ppf(q):
        x = ndtri(lo1 + np.clip(q, 0.0, 1.0) * z1) + theta
        return (ndtr(x) - lo0) / z0

    m = float(np.exp(c + theta * (-trunc_bound)))
    return AltDensity(
        kind="truncnorm",
        params={"theta": theta, "trunc_bound": trunc_bound},
        sup_bound=max(m, 1.0),
        monotone_nonincreasing=True,
        _pdf=pdf, _cdf=cdf, _ppf=ppf,
    )


# ---------------------------------------------------------------------------
# Student-t family (two-sided; mildly non-monotone)


def tdist_density(df: float) -> AltDensity:
    """Two-sided p = 2*Phi(-|X|) with X ~ t_df under the alternative.

    The null statistic is standard normal.  g(u) = f_t(x)/phi(x) at
    x = Phi^{-1}(1 - u/2); it dips to a minimum near u = 0.32 and rises
    toward u = 1, so the monotone flag is off and the sup bound is a grid
    maximum (the density diverges slowly at u = 0).
    """
    if df <= 0:
        raise ValueError("df must be positive")
    dist = student_t(df)

    def x_of_u(u):
        return -ndtri(np.clip(u, 1e-300, 1.0) / 2.0)

    def pdf(u):
        x = x_of_u(u)
        return np.exp(dist.logpdf(x) - (-0.5 * x * x - 0.5 * np.log(2 * np.pi)))

    def cdf(u):
        return 2.0 * dist.cdf(-x_of_u(u))

    def ppf(q):
        x = -dist.ppf(np.clip(q, 0.0, 1.0) / 2.0)
        return 2.0 * ndtr(-x)

    m = float(np.max(pdf(_SUP_GRID)))
    return AltDensity(
        kind="tdist",
        params={"df": float(df)},
        sup_bound=max(m, 1.0),
        monotone_nonincreasing=False,
        _pdf=pdf, _cdf=cdf, _ppf=ppf,
    )


# ---------------------------------------------------------------------------
# Beta family


def beta_density(s: float) -> AltDensity:
    """Beta(s, 1) alternative: g(u) = s u^{s-1}, decreasing for s < 1."""
    if s <= 0:
        raise ValueError("s must be positive")

    def pdf(u):
        with np.errstate(divide="ignore"):
            return s * np.power(u, s - 1.0)

    def cdf(u):
        return np.power(np.clip(u, 0.0, 1.0), s)

    def ppf(q):
        return np.power(np.clip(q, 0.0, 1.0), 1.0 / s)

    if s <= 1.0:
        m = float(np.max(pdf(_SUP_GRID)))
    else:
        m = float(s)
    return AltDensity(
        kind="beta",
        params={"s": float(s)},
        sup_bound=max(m, 1.0),
        monotone_nonincreasing=s <= 1.0,
        _pdf=pdf, _cdf=cdf, _ppf=ppf,
    )


# ---------------------------------------------------------------------------
# two-component Gaussian location mixture


def mixnorm_density(theta: float, spread: float = 0.5,
                    trunc_bound: float = 6.0) -> AltDensity:
    """Equal-weight mixture of truncated normals with means theta +/- spread.

    Same truncation and one-sided p-value as the truncated-normal family.
    Defaults: spread 0.5, so theta = -1 mixes means -1.5 and -0.5.
    """
    if trunc_bound <= 0:
        raise ValueError("trunc_bound must be positive")
    means = (theta - spread, theta + spread)
    z0 = ndtr(trunc_bound) - ndtr(-trunc_bound)
    lo0 = ndtr(-trunc_bound)
    zs = [ndtr(trunc_bound - m) - ndtr(-trunc_bound - m) for m in means]
    los = [ndtr(-trunc_bound - m) for m in means]

    def x_of_u(u):
        return ndtri(lo0 + np.clip(u, 0.0, 1.0) * z0)

    def pdf(u):
        x = x_of_u(u)
        out = np.zeros_like(x)
        for m, zm in zip(means, zs):
            out += 0.5 * (z0 / zm) * np.exp(m * x - 0.5 * m * m)
        return out

    def cdf(u):
        x = x_of_u(u)
        out = np.zeros_like(x)
        for m, zm, lom in zip(means, zs, los):
            out += 0.5 * (ndtr(x - m) - lom) / zm
        return out

    # quantile via a dense monotone mesh in the statistic; exact enough for
    # simulation (parametric pairs (cdf(x), p(x)) interpolated monotonically)
    xm = np.linspace(-trunc_bound, trunc_bound, 8193)
    um = (ndtr(xm) - lo0) / z0
    qm = np.zeros_like(xm)
    for m, zm, lom in zip(means, zs, los):
        qm += 0.5 * (ndtr(xm - m) - lom) / zm
    qm, idx = np.unique(qm, return_index=True)
    um = um[idx]
    interp = PchipInterpolator(qm, um)

    def ppf(q):
        return np.clip(interp(np.clip(q, qm[0], qm[-1])), 0.0, 1.0)

    monotone = all(m < 0 for m in means)
    if monotone:
        m_sup = float(pdf(np.array(0.0)))
    else:
        m_sup = float(np.max(pdf(_SUP_GRID)))
    return AltDensity(
        kind="mixnorm",
        params={"theta": float(theta), "spread": float(spread),
                "trunc_bound": float(trunc_bound)},
        sup_bound=max(m_sup, 1.0),
        monotone_nonincreasing=monotone,
        _pdf=pdf, _cdf=cdf, _ppf=ppf,
    )


def uniform_density() -> AltDensity:
    """The degenerate alternative g = 1 (null equals alternative)."""

    def pdf(u):
        return np.ones_like(u)

    def cdf(u):
        return np.clip(u, 0.0, 1.0)

    return AltDensity(
        kind="uniform", params={}, sup_bound=1.0, monotone_nonincreasing=True,
        _pdf=pdf, _cdf=cdf, _ppf=cdf,
    )


# ---------------------------------------------------------------------------
# Grenander estimator


@dataclass(frozen=True)
class GrenanderFit:
    """Piecewise-constant non-increasing density fitted by maximum likelihood.

    ``heights[j]`` applies on (breakpoints[j-1], breakpoints[j]] with an
    implicit left edge at 0; equals the left derivative of the least concave
    majorant of the empirical CDF.
    """

    breakpoints: np.ndarray
    heights: np.ndarray
    sample_size: int

    def to_spec(self) -> dict:
        return {
            "breakpoints": [float(b) for b in self.breakpoints],
            "heights": [float(h) for h in self.heights],
            "n": int(self.sample_size),
        }

    @staticmethod
    def from_spec(rec: dict) -> "GrenanderFit":
        return GrenanderFit(
            breakpoints=np.asarray(rec["breakpoints"], dtype=float),
            heights=np.asarray(rec["heights"], dtype=float),
            sample_size=int(rec["n"]),
        )


def _pava_nonincreasing(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted antitonic regression by pooling adjacent violators."""
    vals: list[float] = []
    wts: list[float] = []
    cnts: list[int] = []
    for v, w in zip(values, weights):
        vals.append(float(v))
        wts.append(float(w))
        cnts.append(1)
        while len(vals) > 1 and vals[-2] < vals[-1]:
            w_new = wts[-2] + wts[-1]
            v_new = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / w_new
            vals[-2:] = [v_new]
            wts[-2:] = [w_new]
            cnts[-2:] = [cnts[-2] + cnts[-1]]
    return np.repeat(vals, cnts)


def fit_grenander(samples) -> GrenanderFit:
    """Grenander estimator of a non-increasing density on [0, 1].

    Identical sample values are merged into one ECDF jump before taking the
    least concave majorant; exact zeros are nudged up since the monotone MLE
    is degenerate there.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise ValueError("need at least one sample")
    if s[0] < 0.0 or s[-1] > 1.0:
        raise ValueError("samples must lie in [0, 1]")
    if s[0] == 0.0:
        positive = s[s > 0]
        tiny = min(1e-12, float(positive[0]) / 2.0) if positive.size else 1e-12
        s = np.maximum(s, tiny)
    n = s.size
    t, counts = np.unique(s, return_counts=True)
    ecdf = np.cumsum(counts) / n
    x = np.concatenate(([0.0], t))
    y = np.concatenate(([0.0], ecdf))
    widths = np.diff(x)
    slopes = np.diff(y) / widths
    h = _pava_nonincreasing(slopes, widths)

    # merge adjacent cells with equal pooled height
    bps = [float(x[1])]
    hts = [float(h[0])]
    for j in range(1, h.size):
        if abs(h[j] - hts[-1]) <= 1e-12 * max(1.0, abs(hts[-1])):
            bps[-1] = float(x[j + 1])
        else:
            bps.append(float(x[j + 1]))
            hts.append(float(h[j]))
    if bps[-1] < 1.0:
        bps.append(1.0)
        hts.append(0.0)
    return GrenanderFit(
        breakpoints=np.asarray(bps), heights=np.asarray(hts), sample_size=n,
    )


def grenander_density(fit: GrenanderFit) -> AltDensity:
    """Wrap a GrenanderFit as an AltDensity usable by the solver."""
    bps = np.asarray(fit.breakpoints, dtype=float)
    hts = np.asarray(fit.heights, dtype=float)
    edges = np.concatenate(([0.0], bps))
    cum = np.concatenate(([0.0], np.cumsum(hts * np.diff(edges))))
    cum[-1] = max(cum[-1], cum[-2])  # guard rounding at the flat tail

    def pdf(u):
        idx = np.searchsorted(bps, np.clip(u, 0.0, 1.0), side="left")
        idx = np.minimum(idx, hts.size - 1)
        return hts[idx]

    def cdf(u):
        uu = np.clip(u, 0.0, 1.0)
        idx = np.searchsorted(bps, uu, side="left")
        idx = np.minimum(idx, hts.size - 1)
        return cum[idx] + hts[idx] * (uu - edges[idx])

    def ppf(q):
        qq = np.clip(q, 0.0, cum[-1])
        idx = np.searchsorted(cum[1:], qq, side="left")
        idx = np.minimum(idx, hts.size - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(hts[idx] > 0, (qq - cum[idx]) / hts[idx], 0.0)
        return np.clip(edges[idx] + frac, 0.0, 1.0)

    return AltDensity(
        kind="grenander-fit",
        params={"breakpoints": bps, "heights": hts, "n": fit.sample_size},
        sup_bound=max(float(hts[0]), 1.0),
        monotone_nonincreasing=True,
        _pdf=pdf, _cdf=cdf, _ppf=ppf,
    )


# ---------------------------------------------------------------------------
# construction from serialized specs


def density_from_spec(rec: dict) -> AltDensity:
    """Rebuild an AltDensity from a {kind, params} record."""
    kind = rec["kind"]
    params = rec.get("params", {})
    if kind == "truncnorm":
        return truncnorm_density(params["theta"], params.get("trunc_bound", 6.0))
    if kind == "tdist":
        return tdist_density(params["df"])
    if kind == "beta":
        return beta_density(params["s"])
    if kind == "mixnorm":
        return mixnorm_density(params["theta"], params.get("spread", 0.5),
                               params.get("trunc_bound", 6.0))
    if kind == "uniform":
        return uniform_density()
    if kind == "grenander-fit":
        fit = GrenanderFit(
            breakpoints=np.asarray(params["breakpoints"], dtype=float),
            heights=np.asarray(params["heights"], dtype=float),
            sample_size=int(params["n"]),
        )
        return grenander_density(fit)
    raise ValueError(f"unknown density kind {kind!r}")
