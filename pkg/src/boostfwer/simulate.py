"""Seeded Monte-Carlo engine for power/FWER benchmarking.

Replicates are generated from a counter-based stream keyed by (seed,
replicate_index), so results are bit-identical regardless of execution order
or thread count.  Dependence is applied to latent Gaussians before the
p-value transform; alternatives are mapped through the family's quantile
function (the Student-t family keeps its native two-sided transform).
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr
from scipy.stats import t as student_t

from . import baselines
from .boost import BlockPartition
from .densities import AltDensity, density_from_spec
from .solver import K3Rule, K3SolveError, MuVector, SolverParams, \
    compute_optimal_mu, default_grid

__all__ = ["SimConfig", "SimResult", "dgp_sample", "run_experiment", "sweep",
           "write_sweep_csv", "config_from_json", "SWEEP_COLUMNS"]

SWEEP_COLUMNS = ("family", "theta", "K", "B", "alpha", "method", "metric",
                 "value", "mc_se", "n_rep", "seed")

STRONG_FWER_METHODS = ("boost",) + tuple(
    m for m in baselines.ALL_METHODS if m != "bh_fdr")


@dataclass(frozen=True)
class SimConfig:
    """Declarative experiment description; see README for the JSON schema."""

    family: dict                      # {kind, params} density spec
    K: int
    B: int
    alpha: float
    methods: tuple
    n_rep: int
    seed: int
    budget: str = "bonferroni"        # bonferroni | sidak for the boost split
    configuration: str = "full_alternative"
    ell: int = 0                      # for configuration == "h_ell"
    fraction: float = 0.5             # for configuration == "scattered"
    dependence: str = "independent"   # independent | equicorrelated | one_factor
    rho: float = 0.0
    mean_loading: float = 0.0
    null_transform: str = "one_sided"  # or "two_sided" latent-null mapping
    n_resamples: int = 2000
    n_per_axis: int = 70

    def __post_init__(self):
        if self.K != 3 * self.B:
            raise ValueError("K must equal 3B")
        if self.n_rep < 100:
            raise ValueError("need n_rep >= 100")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.configuration == "scattered" and not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")
        if self.configuration not in ("complete_null", "h_ell",
                                      "full_alternative", "sparse_blocks",
                                      "scattered"):
            raise ValueError(f"unknown configuration {self.configuration!r}")
        if self.dependence not in ("independent", "equicorrelated",
                                   "one_factor"):
            raise ValueError(f"unknown dependence {self.dependence!r}")
        if self.budget not in ("bonferroni", "sidak"):
            raise ValueError(f"unknown budget {self.budget!r}")

    @property
    def density(self) -> AltDensity:
        return density_from_spec(self.family)

    def label_pattern(self) -> np.ndarray | None:
        """Fixed truth labels, or None when placement is per-replicate."""
        k = self.K
        if self.configuration == "complete_null":
            return np.zeros(k, dtype=bool)
        if self.configuration == "full_alternative":
            return np.ones(k, dtype=bool)
        if self.configuration == "h_ell":
            lab = np.zeros(k, dtype=bool)
            lab[:self.ell] = True
            return lab
        if self.configuration == "sparse_blocks":
            lab = np.zeros(k, dtype=bool)
            lab[:3 * ((self.B + 1) // 2)] = True
            return lab
        return None  # scattered


@dataclass
class SimResult:
    config: SimConfig
    records: dict  # method -> metrics dict


def _block_loadings(cfg: SimConfig) -> np.ndarray:
    """Block-constant one-factor loadings, linearly spaced with given mean."""
    lam = cfg.mean_loading
    if cfg.B == 1:
        per_block = np.array([lam])
    else:
        spread = min(0.1, 0.5 * lam, 0.99 - lam)
        per_block = lam + spread * np.linspace(-1, 1, cfg.B)
    return np.repeat(per_block, 3)


def _rng_for(seed: int, replicate_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=(int(seed), int(replicate_index))))


def dgp_sample(cfg: SimConfig, replicate_index: int,
               density: AltDensity | None = None):
    """One replicate: (p-values, truth labels), deterministic in the index."""
    rng = _rng_for(cfg.seed, replicate_index)
    density = density or cfg.density
    k = cfg.K
    z = rng.standard_normal(k + 1)
    z0, zk = z[0], z[1:]
    if cfg.dependence == "independent":
        x = zk
    elif cfg.dependence == "equicorrelated":
        x = np.sqrt(cfg.rho) * z0 + np.sqrt(1 - cfg.rho) * zk
    else:
        lam = _block_loadings(cfg)
        x = lam * z0 + np.sqrt(1 - lam ** 2) * zk

    labels = cfg.label_pattern()
    if labels is None:
        labels = np.zeros(k, dtype=bool)
        m = max(1, round(cfg.fraction * k))
        labels[rng.choice(k, size=m, replace=False)] = True

    u = ndtr(x)
    p = np.empty(k)
    nulls = ~labels
    if cfg.null_transform == "two_sided":
        p[nulls] = 2.0 * ndtr(-np.abs(x[nulls]))
    else:
        p[nulls] = u[nulls]
    if labels.any():
        if density.kind == "tdist":
            tvals = student_t(density.params["df"]).ppf(u[labels])
            p[labels] = 2.0 * ndtr(-np.abs(tvals))
        else:
            p[labels] = density.ppf(u[labels])
    return p, labels


def _uniform_level(cfg: SimConfig) -> float:
    if cfg.budget == "sidak":
        return 1.0 - (1.0 - cfg.alpha) ** (1.0 / cfg.B)
    return cfg.alpha / cfg.B


def _prepare_context(cfg: SimConfig) -> dict:
    """Everything replicate evaluation needs, solved/estimated once."""
    ctx: dict = {"partition": BlockPartition(
        {b: (3 * b, 3 * b + 1, 3 * b + 2) for b in range(cfg.B)})}
    if "boost" in cfg.methods:
        density = cfg.density
        grid = default_grid(density, n_per_axis=cfg.n_per_axis)
        level = _uniform_level(cfg)
        mu, diag = compute_optimal_mu(level, density, grid)
        if diag.flag != "success":
            raise K3SolveError(diag)
        ctx["boost_mu"] = (mu.mu0, mu.mu1, mu.mu2)
        ctx["boost_density_spec"] = density.to_spec()
    if "minp_resampling" in cfg.methods:
        null_cfg = replace(cfg, configuration="complete_null",
                           methods=("bonferroni",), seed=cfg.seed + 0x5EED)
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=(cfg.seed, 0x5EED)))
        minima = np.empty(cfg.n_resamples)
        for r in range(cfg.n_resamples):
            p, _ = dgp_sample(null_cfg, r)
            minima[r] = p.min()
        minima.sort()
        rank = max(int(np.floor(cfg.alpha * (cfg.n_resamples + 1))), 1)
        ctx["minp_cutoff"] = float(minima[rank - 1])
    return ctx


def _boost_reject(p: np.ndarray, cfg: SimConfig, ctx: dict) -> set:
    density = ctx.setdefault("boost_density",
                             density_from_spec(ctx["boost_density_spec"]))
    mu = MuVector(*ctx["boost_mu"])
    b = cfg.B
    triples = p.reshape(b, 3)
    order = np.argsort(triples, axis=1)
    s = np.take_along_axis(triples, order, axis=1)
    g1 = density.pdf(s[:, 0])
    g2 = density.pdf(s[:, 1])
    g3 = density.pdf(s[:, 2])
    two_a = 2.0 * g1 * g2 * g3
    r1 = two_a - 6.0 * mu.mu0 - 2.0 * mu.mu1 * (g2 + g3) - 2.0 * mu.mu2 * g2 * g3
    r2 = two_a - 2.0 * mu.mu1 * g1 - 2.0 * mu.mu2 * g1 * g3
    r3 = two_a - 2.0 * mu.mu2 * g1 * g2
    s12 = r1 + r2
    s123 = s12 + r3
    a1 = (r1 > 0) | (s12 > 0) | (s123 > 0)
    a2 = (r2 > 0) | ((r2 + r3) > 0)
    counts = a1.astype(int) + (a1 & a2) + (a1 & a2 & (r3 > 0))
    out: set = set()
    for blk in range(b):
        for j in range(counts[blk]):
            out.add(3 * blk + int(order[blk, j]))
    return out


def _method_reject(method: str, p: np.ndarray, cfg: SimConfig, ctx: dict) -> set:
    if method == "boost":
        return _boost_reject(p, cfg, ctx)
    if method in baselines.STEPWISE_METHODS:
        return baselines.stepwise(method, p, cfg.alpha)
    if method in ("block_holm", "block_hochberg"):
        return baselines.block_gatekeeping(method, p, ctx["partition"],
                                           cfg.alpha)
    if method == "closed_fisher":
        return baselines.closed_fisher(p, cfg.alpha)
    if method in ("meinshausen", "hartog_evalue"):
        return baselines.tree_closure(method, p, ctx["partition"], cfg.alpha)
    if method == "minp_resampling":
        return set(np.nonzero(p <= ctx["minp_cutoff"])[0])
    if method == "bh_fdr":
        return baselines.bh_fdr(p, cfg.alpha)
    raise ValueError(f"unknown method {method!r}")


def _chunk_stats(cfg: SimConfig, ctx: dict, start: int, stop: int):
    """Per-replicate statistics for a replicate range, one row per method."""
    n = stop - start
    n_methods = len(cfg.methods)
    false_any = np.zeros((n_methods, n), dtype=bool)
    true_count = np.zeros((n_methods, n), dtype=np.int32)
    n_alt = np.zeros(n, dtype=np.int32)
    density = cfg.density
    for j, rep in enumerate(range(start, stop)):
        try:
            p, labels = dgp_sample(cfg, rep, density)
            n_alt[j] = int(labels.sum())
            for i, method in enumerate(cfg.methods):
                rej = _method_reject(method, p, cfg, ctx)
                if rej:
                    idx = np.fromiter(rej, dtype=int)
                    false_any[i, j] = bool(np.any(~labels[idx]))
                    true_count[i, j] = int(np.sum(labels[idx]))
        except Exception as exc:
            raise RuntimeError(
                f"replicate {rep} (seed {cfg.seed}) failed: {exc}") from exc
    return false_any, true_count, n_alt


def run_experiment(cfg: SimConfig, threads: int = 1) -> SimResult:
    """Loop replicates, reduce per-method metrics with deterministic order."""
    ctx = _prepare_context(cfg)
    t0 = time.perf_counter()
    if threads <= 1:
        false_any, true_count, n_alt = _chunk_stats(cfg, ctx, 0, cfg.n_rep)
    else:
        bounds = np.linspace(0, cfg.n_rep, threads + 1, dtype=int)
        pieces = []
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_chunk_stats, cfg, ctx, int(a), int(b))
                       for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            pieces = [f.result() for f in futures]
        false_any = np.concatenate([x[0] for x in pieces], axis=1)
        true_count = np.concatenate([x[1] for x in pieces], axis=1)
        n_alt = np.concatenate([x[2] for x in pieces])
    wall = time.perf_counter() - t0

    records = {}
    with_alt = n_alt > 0
    ell = int(n_alt.max()) if n_alt.size else 0  # alternatives in h_ell
    for i, method in enumerate(cfg.methods):
        rec: dict = {}
        if with_alt.any():
            share = true_count[i, with_alt] / n_alt[with_alt]
            rec["avg_power"] = float(share.mean())
            rec["any_power"] = float((true_count[i, with_alt] > 0).mean())
            rec["all_reject_prob"] = float(
                (true_count[i, with_alt] == n_alt[with_alt]).mean())
            rec["mc_se_power"] = float(np.sqrt(
                rec["avg_power"] * (1 - rec["avg_power"]) / cfg.n_rep))
        else:
            rec["avg_power"] = rec["any_power"] = rec["all_reject_prob"] = float("nan")
            rec["mc_se_power"] = float("nan")
        fwer = float(false_any[i].mean())
        rec["fwer_by_ell"] = {ell: fwer}
        rec["mc_se_fwer"] = float(np.sqrt(max(fwer * (1 - fwer), 1e-12)
                                          / cfg.n_rep))
        rec["wall_clock_seconds"] = wall / len(cfg.methods)
        records[method] = rec
    return SimResult(config=cfg, records=records)


# ---------------------------------------------------------------------------
# sweeps and CSV


def _family_theta(cfg: SimConfig):
    params = cfg.family.get("params", {})
    for key in ("theta", "df", "s"):
        if key in params:
            return params[key]
    return float("nan")


def sweep(configs, threads: int = 1):
    """Run configs in order; one row per (config, method, metric).

    Wall-clock stays out of the rows so output bytes depend only on
    (configs, seeds).
    """
    rows = []
    for cfg in configs:
        result = run_experiment(cfg, threads=threads)
        for method, rec in result.records.items():
            entries = [("avg_power", rec["avg_power"], rec["mc_se_power"]),
                       ("any_power", rec["any_power"], rec["mc_se_power"]),
                       ("all_reject_prob", rec["all_reject_prob"],
                        rec["mc_se_power"])]
            for ell, val in rec["fwer_by_ell"].items():
                entries.append((f"fwer_ell{ell}", val, rec["mc_se_fwer"]))
            for metric, value, se in entries:
                rows.append({
                    "family": cfg.family["kind"],
                    "theta": _family_theta(cfg),
                    "K": cfg.K, "B": cfg.B, "alpha": cfg.alpha,
                    "method": method, "metric": metric,
                    "value": value, "mc_se": se,
                    "n_rep": cfg.n_rep, "seed": cfg.seed,
                })
    return rows


def write_sweep_csv(rows, path_or_buffer) -> None:
    close = False
    if isinstance(path_or_buffer, (str, bytes)):
        fh = open(path_or_buffer, "w", newline="")
        close = True
    else:
        fh = path_or_buffer
    try:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS,
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            out = dict(row)
            out["value"] = repr(float(row["value"]))
            out["mc_se"] = repr(float(row["mc_se"]))
            writer.writerow(out)
    finally:
        if close:
            fh.close()


def sweep_csv_text(rows) -> str:
    buf = io.StringIO()
    write_sweep_csv(rows, buf)
    return buf.getvalue()


def config_from_json(rec) -> SimConfig:
    """Build a SimConfig from its JSON document (dict or text)."""
    if isinstance(rec, (str, bytes)):
        rec = json.loads(rec)
    rec = dict(rec)
    rec["methods"] = tuple(rec.get("methods", ("boost", "bonferroni")))
    cfg_field = rec.pop("configuration", "full_alternative")
    if isinstance(cfg_field, dict):
        rec["configuration"] = cfg_field["kind"]
        rec["ell"] = cfg_field.get("ell", 0)
        rec["fraction"] = cfg_field.get("fraction", 0.5)
    else:
        rec["configuration"] = cfg_field
    dep = rec.pop("dependence", "independent")
    if isinstance(dep, dict):
        rec["dependence"] = dep["kind"]
        rec["rho"] = dep.get("rho", 0.0)
        rec["mean_loading"] = dep.get("mean_loading", 0.0)
    else:
        rec["dependence"] = dep
    return SimConfig(**rec)
