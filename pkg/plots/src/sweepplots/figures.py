"""Render benchmark sweep CSVs into fixed figure layouts.

Every plotted number appears verbatim in the input CSV; this package never
recomputes statistics.  Rendering is deterministic: fixed figure geometry,
stable per-method colors, and pinned PNG metadata.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGURE_KINDS = ("family_panels", "scaleK_grid", "convergence", "plugin_rate",
                "dep_stress", "alpha_sensitivity")

SWEEP_COLUMNS = {"family", "theta", "K", "B", "alpha", "method", "metric",
                 "value", "mc_se", "n_rep", "seed"}

REQUIRED_COLUMNS = {
    "family_panels": SWEEP_COLUMNS,
    "scaleK_grid": SWEEP_COLUMNS,
    "alpha_sensitivity": SWEEP_COLUMNS,
    "convergence": {"iteration", "error", "series"},
    "plugin_rate": {"n", "r_n", "sup_err_mean", "power_gap_mean"},
    "dep_stress": {"regime", "param", "method", "metric", "value"},
}

# stable method palette across every figure; unknown methods get a
# deterministic fallback from the tab20 cycle
METHOD_COLORS = {
    "boost": "#d62728",
    "bonferroni": "#1f77b4",
    "sidak_ss": "#17becf",
    "holm": "#2ca02c",
    "hochberg": "#98df8a",
    "hommel": "#9467bd",
    "sidak_sd": "#8c564b",
    "block_holm": "#e377c2",
    "block_hochberg": "#f7b6d2",
    "closed_fisher": "#7f7f7f",
    "meinshausen": "#bcbd22",
    "hartog_evalue": "#ff7f0e",
    "minp_resampling": "#aec7e8",
    "bh_fdr": "#c49c94",
}

PNG_METADATA = {"Software": "sweepplots"}
DPI = 110


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    csv_path: str
    out_path: str

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"choose from {FIGURE_KINDS}")


class MissingColumnsError(ValueError):
    def __init__(self, missing, path):
        self.missing = sorted(missing)
        super().__init__(f"{path}: missing required columns {self.missing}")


def load_rows(spec: FigureSpec):
    with open(spec.csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = set(reader.fieldnames or ())
        missing = REQUIRED_COLUMNS[spec.kind] - fields
        if missing:
            raise MissingColumnsError(missing, spec.csv_path)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{spec.csv_path}: no data rows")
    return rows


def _color(method: str) -> str:
    if method in METHOD_COLORS:
        return METHOD_COLORS[method]
    palette = plt.get_cmap("tab20").colors
    return matplotlib.colors.to_hex(palette[hash(method) % len(palette)])


def _fnum(text):
    return float(text)


def _series_by_method(rows, metric, x_key):
    """method -> sorted (x, value) pairs for one metric."""
    out: dict = {}
    for row in rows:
        if row["metric"] != metric:
            continue
        out.setdefault(row["method"], []).append(
            (_fnum(row[x_key]), _fnum(row["value"])))
    return {m: sorted(v) for m, v in sorted(out.items())}


def _save(fig, out_path):
    fig.savefig(out_path, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)


def _plot_series(ax, series):
    for method, pairs in series.items():
        xs = [p[0] for p in pairs]
        ys = [p[1] for p in pairs]
        ax.plot(xs, ys, marker="o", markersize=3, linewidth=1.4,
                label=method, color=_color(method))


def render_family_panels(spec: FigureSpec):
    rows = load_rows(spec)
    families = sorted({r["family"] for r in rows})
    metrics = ("avg_power", "any_power")
    fig, axes = plt.subplots(2, len(families),
                             figsize=(4.2 * len(families), 6.4),
                             squeeze=False)
    for j, fam in enumerate(families):
        fam_rows = [r for r in rows if r["family"] == fam]
        for i, metric in enumerate(metrics):
            ax = axes[i][j]
            _plot_series(ax, _series_by_method(fam_rows, metric, "theta"))
            ax.set_xlabel("signal parameter")
            ax.set_ylabel(metric)
            if i == 0:
                ax.set_title(fam)
    handles, labels = axes[0][0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="lower center",
                   ncol=min(6, len(labels)), fontsize=8, frameon=False)
    fig.tight_layout(rect=(0, 0.08, 1, 1))
    _save(fig, spec.out_path)


def render_scaleK_grid(spec: FigureSpec):
    rows = load_rows(spec)
    ks = sorted({int(r["K"]) for r in rows})
    families = sorted({r["family"] for r in rows})
    fig, axes = plt.subplots(len(ks), len(families),
                             figsize=(4.2 * len(families), 3.0 * len(ks)),
                             squeeze=False)
    for i, k in enumerate(ks):
        for j, fam in enumerate(families):
            sub = [r for r in rows if int(r["K"]) == k and r["family"] == fam]
            ax = axes[i][j]
            _plot_series(ax, _series_by_method(sub, "avg_power", "theta"))
            ax.set_title(f"{fam}, K={k}", fontsize=9)
            ax.set_ylabel("avg_power")
    fig.tight_layout()
    _save(fig, spec.out_path)


def render_convergence(spec: FigureSpec):
    rows = load_rows(spec)
    fig, ax = plt.subplots(figsize=(5.6, 4.2))
    series: dict = {}
    for row in rows:
        series.setdefault(row["series"], []).append(
            (_fnum(row["iteration"]), _fnum(row["error"])))
    for name, pairs in sorted(series.items()):
        pairs.sort()
        ax.semilogy([p[0] for p in pairs], [p[1] for p in pairs],
                    marker="o", markersize=3, label=name)
    ax.set_xlabel("iteration")
    ax.set_ylabel("error")
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    _save(fig, spec.out_path)


def render_plugin_rate(spec: FigureSpec):
    rows = load_rows(spec)
    rows.sort(key=lambda r: _fnum(r["n"]))
    n = [_fnum(r["n"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.2, 4.0))
    ax1.loglog(n, [_fnum(r["sup_err_mean"]) for r in rows], marker="o",
               label="sup-norm error")
    ax1.loglog(n, [_fnum(r["r_n"]) for r in rows], linestyle="--",
               label="(log n / n)^(1/3)")
    ax1.set_xlabel("estimation-fold size n")
    ax1.legend(fontsize=8, frameon=False)
    ax2.semilogx(n, [_fnum(r["power_gap_mean"]) for r in rows], marker="o",
                 color=METHOD_COLORS["boost"])
    ax2.axhline(0.0, color="#999999", linewidth=0.8)
    ax2.set_xlabel("estimation-fold size n")
    ax2.set_ylabel("power gap to known-density rule")
    fig.tight_layout()
    _save(fig, spec.out_path)


def render_dep_stress(spec: FigureSpec):
    rows = load_rows(spec)
    regimes = sorted({r["regime"] for r in rows})
    fig, axes = plt.subplots(1, len(regimes),
                             figsize=(4.4 * len(regimes), 3.6), squeeze=False)
    for j, regime in enumerate(regimes):
        ax = axes[0][j]
        sub = [r for r in rows if r["regime"] == regime]
        metrics = sorted({r["metric"] for r in sub})
        methods = sorted({r["method"] for r in sub})
        params = sorted({_fnum(r["param"]) for r in sub})
        width = 0.8 / max(len(methods) * len(metrics), 1)
        slot = 0
        for method in methods:
            for metric in metrics:
                vals = {_fnum(r["param"]): _fnum(r["value"]) for r in sub
                        if r["method"] == method and r["metric"] == metric}
                xs = np.arange(len(params)) + slot * width
                ax.bar(xs, [vals.get(p, np.nan) for p in params], width,
                       label=f"{method}:{metric}",
                       color=_color(method),
                       alpha=1.0 if slot % 2 == 0 else 0.55)
                slot += 1
        ax.set_xticks(np.arange(len(params)) + 0.4 - width / 2)
        ax.set_xticklabels([f"{p:g}" for p in params], fontsize=8)
        ax.set_title(regime, fontsize=9)
        ax.legend(fontsize=6, frameon=False)
    fig.tight_layout()
    _save(fig, spec.out_path)


def render_alpha_sensitivity(spec: FigureSpec):
    rows = load_rows(spec)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.2, 4.0))
    for metric, ax in (("avg_power", ax1), ("any_power", ax2)):
        _plot_series(ax, _series_by_method(rows, metric, "alpha"))
        ax.set_xlabel("alpha")
        ax.set_ylabel(metric)
    ax1.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    _save(fig, spec.out_path)


RENDERERS = {
    "family_panels": render_family_panels,
    "scaleK_grid": render_scaleK_grid,
    "convergence": render_convergence,
    "plugin_rate": render_plugin_rate,
    "dep_stress": render_dep_stress,
    "alpha_sensitivity": render_alpha_sensitivity,
}


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the output path."""
    RENDERERS[spec.kind](spec)
    return spec.out_path
