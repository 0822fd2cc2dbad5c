"""Exact power-optimal strong-FWER testing on one block of three p-values.

Works on the ordered simplex Q with sorted p-values (u1, u2, u3).  For dual
multipliers mu = (mu0, mu1, mu2) on the three error constraints, the induced
rule rejects a prefix of the sorted triple according to partial sums of the
coefficient functions R_i; the optimal mu is found by cyclic coordinate
descent, each coordinate solved by expanding-bracket bisection against its
realized error level.

All four functionals of a rule D = (D1, D2, D3) on Q are linear:

    avg_power = 2 I[(D1+D2+D3) g1 g2 g3]
    fwer0     = 6 I[D1]
    fwer1     = 2 I[D1 (g2+g3) + D2 g1]
    fwer2     = 2 I[D1 g2 g3 + D2 g1 g3 + D3 g1 g2]

with I[.] the integral over Q and gi = g(ui).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .densities import AltDensity
from .quadrature import QGrid, build_qgrid

__all__ = [
    "MuVector",
    "SolveDiagnostics",
    "SolverParams",
    "RuleMetrics",
    "K3Rule",
    "K3Workspace",
    "K3SolveError",
    "r_coefficients",
    "decide_dmu",
    "constraint_maps",
    "compute_coordinate_mu",
    "compute_optimal_mu",
    "evaluate_rule",
    "pi3_value",
    "default_grid",
    "clear_solver_cache",
    "artifact_record",
]

MSG_LEVEL_UNREACHABLE = "Consider decreasing FWER level α."
MSG_BRACKET_FAILED = "Consider increasing U_max or decreasing FWER level α."


@dataclass(frozen=True)
class MuVector:
    mu0: float
    mu1: float
    mu2: float

    def __post_init__(self):
        if min(self.mu0, self.mu1, self.mu2) < 0:
            raise ValueError("dual multipliers must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu0, self.mu1, self.mu2])


@dataclass
class SolveDiagnostics:
    flag: str  # success | level_unreachable | bracket_failed | max_iter
    message: str
    outer_iterations: int
    final_residuals: tuple[float, float, float]


@dataclass(frozen=True)
class SolverParams:
    """Bisection and outer-loop tolerances.

    delta is the bisection half-width, epsilon the outer step-norm tolerance;
    u_s/u_f/u_max control bracket expansion.  residual_tol is a second success
    criterion on the stationarity residuals: the dual can have a nearly flat
    valley in (mu1, mu2) along which the iterates crawl without the step norm
    reaching epsilon even though every error level is already calibrated, so
    the loop also stops once each binding coordinate sits within residual_tol
    of alpha and each slack coordinate is below it.
    """

    delta: float = 1e-7
    epsilon: float = 1e-6
    t_max: int = 50
    max_iter_b: int = 200
    u_s: float = 0.5
    u_f: float = 2.0
    u_max: float = 1e6
    residual_tol: float = 1e-4

    @property
    def key(self) -> tuple:
        return (self.delta, self.epsilon, self.t_max, self.max_iter_b,
                self.u_s, self.u_f, self.u_max, self.residual_tol)


@dataclass(frozen=True)
class RuleMetrics:
    fwer0: float
    fwer1: float
    fwer2: float
    avg_power: float


class K3SolveError(RuntimeError):
    """Raised when a solve ends with a non-success flag and the caller needs mu."""

    def __init__(self, diagnostics: SolveDiagnostics):
        super().__init__(f"{diagnostics.flag}: {diagnostics.message}")
        self.diagnostics = diagnostics


# ---------------------------------------------------------------------------
# coefficient functions and the induced decision rule


def r_coefficients(mu: MuVector, u, g: AltDensity):
    """R_i(mu, u) = a_i(u) - sum_l mu_l b_{l,i}(u) for one sorted triple."""
    u = np.asarray(u, dtype=float)
    g1, g2, g3 = (float(g.pdf(u[i])) for i in range(3))
    a = 2.0 * g1 * g2 * g3
    r1 = a - 6.0 * mu.mu0 - 2.0 * mu.mu1 * (g2 + g3) - 2.0 * mu.mu2 * g2 * g3
    r2 = a - 2.0 * mu.mu1 * g1 - 2.0 * mu.mu2 * g1 * g3
    r3 = a - 2.0 * mu.mu2 * g1 * g2
    return r1, r2, r3


def decide_dmu(mu: MuVector, u, g: AltDensity):
    """Optimal nested decision (D1, D2, D3) at one sorted triple.

    D1 fires when any partial sum R1, R1+R2, R1+R2+R3 is strictly positive;
    ties resolve to non-rejection.
    """
    r1, r2, r3 = r_coefficients(mu, u, g)
    a1 = (r1 > 0) or (r1 + r2 > 0) or (r1 + r2 + r3 > 0)
    a2 = (r2 > 0) or (r2 + r3 > 0)
    a3 = r3 > 0
    d1 = int(a1)
    d2 = d1 * int(a2)
    d3 = d2 * int(a3)
    return d1, d2, d3


class K3Workspace:
    """Cached density evaluations on a grid; all solver functionals live here."""

    def __init__(self, density: AltDensity, grid: QGrid):
        self.density = density
        self.grid = grid
        u = grid.nodes
        self.w = grid.weights
        self.g1 = np.asarray(density.pdf(u[:, 0]), dtype=float)
        self.g2 = np.asarray(density.pdf(u[:, 1]), dtype=float)
        self.g3 = np.asarray(density.pdf(u[:, 2]), dtype=float)
        self.p123 = self.g1 * self.g2 * self.g3
        self.s23 = self.g2 + self.g3
        self.p23 = self.g2 * self.g3
        self.p13 = self.g1 * self.g3
        self.p12 = self.g1 * self.g2

    def decisions(self, mu: MuVector):
        """Vectorized nested decisions of the mu-rule at every grid node."""
        two_a = 2.0 * self.p123
        r1 = two_a - 6.0 * mu.mu0 - 2.0 * mu.mu1 * self.s23 - 2.0 * mu.mu2 * self.p23
        r2 = two_a - 2.0 * mu.mu1 * self.g1 - 2.0 * mu.mu2 * self.p13
        r3 = two_a - 2.0 * mu.mu2 * self.p12
        s12 = r1 + r2
        s123 = s12 + r3
        a1 = (r1 > 0) | (s12 > 0) | (s123 > 0)
        a2 = (r2 > 0) | ((r2 + r3) > 0)
        d1 = a1
        d2 = a1 & a2
        d3 = d2 & (r3 > 0)
        return d1, d2, d3

    def metrics_of(self, d1, d2, d3) -> RuleMetrics:
        w = self.w
        return RuleMetrics(
            fwer0=6.0 * float(w @ d1),
            fwer1=2.0 * float(w @ (d1 * self.s23 + d2 * self.g1)),
            fwer2=2.0 * float(w @ (d1 * self.p23 + d2 * self.p13 + d3 * self.p12)),
            avg_power=2.0 * float(w @ ((d1.astype(float) + d2 + d3) * self.p123)),
        )

    def fwer_maps(self, mu: MuVector):
        m = self.metrics_of(*self.decisions(mu))
        return m.fwer0, m.fwer1, m.fwer2


def constraint_maps(mu: MuVector, g: AltDensity, grid: QGrid):
    """(F0, F1, F2): realized per-configuration error levels of the mu-rule.

    These are the coordinate-descent target maps: each F_gamma is
    non-increasing in mu_gamma and equals the corresponding error functional
    of the induced rule, so a fixed point has every error level at alpha.
    """
    return K3Workspace(g, grid).fwer_maps(mu)


# ---------------------------------------------------------------------------
# coordinate root finding (expanding bracket + bisection)


def compute_coordinate_mu(f, alpha: float, params: SolverParams = SolverParams()):
    """Solve f(x) = alpha for one non-increasing coordinate map.

    Returns (value, flag, message).  flag is "success" unless f(0) < alpha
    (level unreachable) or no upper bracket is found below u_max.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    lo = 0.0
    f0 = f(lo)
    if f0 == alpha:
        return 0.0, "success", ""
    if f0 < alpha:
        return 0.0, "level_unreachable", MSG_LEVEL_UNREACHABLE
    hi = lo + params.u_s
    while f(hi) > alpha and hi < params.u_max:
        hi *= params.u_f
    if f(hi) > alpha:
        return lo, "bracket_failed", MSG_BRACKET_FAILED
    for _ in range(params.max_iter_b):
        if (hi - lo) / 2.0 < params.delta:
            break
        mid = lo + (hi - lo) / 2.0
        if f(mid) > alpha:
            lo = mid
        else:
            hi = mid
    return lo + (hi - lo) / 2.0, "success", ""


# ---------------------------------------------------------------------------
# outer cyclic coordinate descent


_SOLVE_CACHE: dict = {}


def clear_solver_cache():
    _SOLVE_CACHE.clear()


def default_grid(density: AltDensity | None = None, n_per_axis: int = 70,
                 mode: str = "qmc") -> QGrid:
    """Default solve grid: warped toward the density when one is given."""
    return build_qgrid(n_per_axis=n_per_axis, mode=mode, warp=density)


def _cache_path(key_digest: str) -> str | None:
    cache_dir = os.environ.get("BOOSTFWER_CACHE_DIR")
    if not cache_dir:
        return None
    os.makedirs(cache_dir, exist_ok=True)
    return os.path.join(cache_dir, f"mu-{key_digest}.json")


def compute_optimal_mu(alpha: float, g: AltDensity, grid: QGrid | None = None,
                       params: SolverParams = SolverParams(),
                       cache: bool = True):
    """Cyclic coordinate updates mu0, mu1, mu2 until the step norm settles.

    Returns (MuVector, SolveDiagnostics).  Any coordinate failure aborts the
    loop and is reported through the diagnostics flag; reaching t_max without
    meeting the step tolerance reports flag "max_iter".
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if grid is None:
        grid = default_grid(g)

    key = (g.key, float(alpha), grid.key, params.key)
    if cache and key in _SOLVE_CACHE:
        return _SOLVE_CACHE[key]
    digest = hashlib.sha256(repr(key).encode()).hexdigest()[:24]
    path = _cache_path(digest) if cache else None
    if path and os.path.exists(path):
        with open(path) as fh:
            rec = json.load(fh)
        result = (
            MuVector(*rec["mu"]),
            SolveDiagnostics(rec["flag"], rec["message"],
                             rec["outer_iterations"], tuple(rec["residuals"])),
        )
        _SOLVE_CACHE[key] = result
        return result

    ws = K3Workspace(g, grid)
    mu = np.zeros(3)
    flag, message = "success", ""
    t = 0
    best = None  # (power, mu) over near-feasible iterates
    prev_profile = None
    stalled = False
    while True:
        t += 1
        prev = mu.copy()
        for coord in range(3):
            def f(x, coord=coord):
                trial = mu.copy()
                trial[coord] = x
                return ws.fwer_maps(MuVector(*trial))[coord]

            value, cflag, cmsg = compute_coordinate_mu(f, alpha, params)
            if cflag == "level_unreachable":
                # constraint already slack at the current iterate: the
                # coordinate minimizer sits on the boundary, keep 0 and move on
                mu[coord] = 0.0
                continue
            mu[coord] = value
            if cflag != "success":
                flag, message = cflag, cmsg
                break
        if flag != "success":
            break
        m = ws.metrics_of(*ws.decisions(MuVector(*mu)))
        fvals = (m.fwer0, m.fwer1, m.fwer2)
        if max(fv - alpha for fv in fvals) <= params.residual_tol:
            if best is None or m.avg_power > best[0]:
                best = (m.avg_power, mu.copy())
        if float(np.linalg.norm(mu - prev)) <= params.epsilon:
            break
        kkt = max(abs(fv - alpha) if mj > 0 else max(fv - alpha, 0.0)
                  for fv, mj in zip(fvals, mu))
        if t >= 2 and kkt <= params.residual_tol:
            break
        # step densities quantize the error maps: the cyclic updates then
        # bounce between decision plateaus without the step norm shrinking;
        # detect the repeating error profile and settle for the best iterate
        # whose levels all fit within alpha + residual_tol
        if prev_profile is not None and t >= 3:
            if max(abs(a - b) for a, b in zip(fvals, prev_profile)) < 1e-14:
                stalled = True
        prev_profile = fvals
        if t >= params.t_max or (stalled and best is not None):
            if best is not None:
                mu = best[1]
            else:
                flag = "max_iter"
                message = "outer loop hit t_max before the step norm converged"
            break

    mu_vec = MuVector(*mu)
    f0, f1, f2 = ws.fwer_maps(mu_vec)
    diag = SolveDiagnostics(
        flag=flag, message=message, outer_iterations=t,
        final_residuals=(f0 - alpha, f1 - alpha, f2 - alpha),
    )
    result = (mu_vec, diag)
    if cache:
        _SOLVE_CACHE[key] = result
        if path:
            with open(path, "w") as fh:
                json.dump({"mu": list(mu), "flag": flag, "message": message,
                           "outer_iterations": t,
                           "residuals": list(diag.final_residuals)}, fh)
    return result


# ---------------------------------------------------------------------------
# rule evaluation and the value function


@dataclass(frozen=True)
class K3Rule:
    """The decision rule induced by solved multipliers for one density."""

    mu: MuVector
    density: AltDensity
    grid: QGrid

    def decide(self, u):
        return decide_dmu(self.mu, u, self.density)

    def decide_many(self, u_sorted: np.ndarray):
        """Nested decisions for an (n, 3) array of sorted triples."""
        u = np.asarray(u_sorted, dtype=float)
        g1 = np.asarray(self.density.pdf(u[:, 0]), dtype=float)
        g2 = np.asarray(self.density.pdf(u[:, 1]), dtype=float)
        g3 = np.asarray(self.density.pdf(u[:, 2]), dtype=float)
        two_a = 2.0 * g1 * g2 * g3
        mu = self.mu
        r1 = two_a - 6.0 * mu.mu0 - 2.0 * mu.mu1 * (g2 + g3) - 2.0 * mu.mu2 * g2 * g3
        r2 = two_a - 2.0 * mu.mu1 * g1 - 2.0 * mu.mu2 * g1 * g3
        r3 = two_a - 2.0 * mu.mu2 * g1 * g2
        s12 = r1 + r2
        s123 = s12 + r3
        a1 = (r1 > 0) | (s12 > 0) | (s123 > 0)
        a2 = (r2 > 0) | ((r2 + r3) > 0)
        d1 = a1
        d2 = a1 & a2
        d3 = d2 & (r3 > 0)
        return d1, d2, d3


def evaluate_rule(rule, g: AltDensity, grid: QGrid) -> RuleMetrics:
    """All four functionals of a rule on the grid.

    ``rule`` is a K3Rule or any callable mapping an (n, 3) array of sorted
    triples to three boolean arrays (D1, D2, D3).  Nesting D3 <= D2 <= D1 must
    hold at every node.
    """
    ws = K3Workspace(g, grid)
    if isinstance(rule, K3Rule):
        d1, d2, d3 = rule.decide_many(grid.nodes)
    else:
        d1, d2, d3 = (np.asarray(d, dtype=bool) for d in rule(grid.nodes))
    viol = (d3 & ~d2) | (d2 & ~d1)
    if viol.any():
        idx = int(np.argmax(viol))
        raise ValueError(
            f"nesting D3 <= D2 <= D1 violated at node {idx}: "
            f"u={tuple(grid.nodes[idx])}"
        )
    return ws.metrics_of(d1, d2, d3)


def pi3_value(alpha: float, g: AltDensity, grid: QGrid | None = None,
              params: SolverParams = SolverParams(), cache: bool = True) -> float:
    """Value function: average power of the solved optimal rule at level alpha."""
    if grid is None:
        grid = default_grid(g)
    mu, diag = compute_optimal_mu(alpha, g, grid, params, cache=cache)
    if diag.flag != "success":
        raise K3SolveError(diag)
    ws = K3Workspace(g, grid)
    return ws.metrics_of(*ws.decisions(mu)).avg_power


def artifact_record(alpha: float, g: AltDensity, grid: QGrid, mu: MuVector,
                    diag: SolveDiagnostics) -> dict:
    """JSON-serializable solver artifact."""
    ws = K3Workspace(g, grid)
    m = ws.metrics_of(*ws.decisions(mu))
    return {
        "alpha": alpha,
        "density": g.to_spec(),
        "grid": {"mode": grid.mode, "n_per_axis": grid.n_per_axis,
                 "n_grid": grid.n_grid, "warped": grid.warp_key is not None},
        "mu": [mu.mu0, mu.mu1, mu.mu2],
        "diagnostics": {"flag": diag.flag, "message": diag.message,
                        "outer_iterations": diag.outer_iterations},
        "residuals": list(diag.final_residuals),
        "metrics": asdict(m),
    }
