"""Static figures rendered from sweep and Fisher tables.

Figures are written next to the tabular output; the tables remain the
primary product and every plotted number is present in them.
"""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiment import ResultTable  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (6.4, 4.0),
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
}
MARKERS = {"ps": "s", "meter": "o", "joint": "^"}
COLORS = {"ps": "tab:red", "meter": "tab:blue", "joint": "tab:green"}
# bounds above this are rounding noise of zero information and would flatten a log axis
_PLOT_BOUND_MAX = 1.0


def _series(rows, key, **match):
    sel = [r for r in rows if all(r[k] == v for k, v in match.items())]
    xs = [r["theta_deg"] for r in sel]
    ys = [r[key] if math.isfinite(r[key]) else math.nan for r in sel]
    return xs, ys, sel


def _modes(rows):
    return list(dict.fromkeys(r["mode"] for r in rows))


def plot_estimates(table: ResultTable, path: Path) -> Path:
    """Ensemble mean of each estimator with its 3 sigma band against theta_i."""
    rows = table.rows
    modes = _modes(rows)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(modes), 1, sharex=True, squeeze=False,
                                 figsize=(6.4, 2.6 * len(modes)))
        for ax, mode in zip(axes[:, 0], modes):
            kinds = list(dict.fromkeys(r["estimator"] for r in rows if r["mode"] == mode))
            for kind in kinds:
                xs, means, sel = _series(rows, "g_hat_mean", mode=mode, estimator=kind)
                bars = [r["three_sigma"] for r in sel]
                ax.errorbar(xs, means, yerr=bars, fmt=MARKERS.get(kind, "o"), ms=3, capsize=2,
                            color=COLORS.get(kind), label=kind)
            g_true = sel[0]["g_true"] if sel else math.nan
            ax.axhline(g_true, color="k", lw=0.8, ls="--")
            ax.set_ylabel(r"$\hat{g}\Delta$")
            ax.set_title(f"post-selection: {mode}", fontsize=9)
            ax.legend(loc="best")
        axes[-1, 0].set_xlabel(r"$\theta_i$ (deg)")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_uncertainty(table: ResultTable, path: Path) -> Path:
    """Ensemble standard deviation against the matching Cramer-Rao bound."""
    rows = table.rows
    modes = _modes(rows)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(modes), 1, sharex=True, squeeze=False,
                                 figsize=(6.4, 2.6 * len(modes)))
        for ax, mode in zip(axes[:, 0], modes):
            kinds = list(dict.fromkeys(r["estimator"] for r in rows if r["mode"] == mode))
            for kind in kinds:
                xs, std, sel = _series(rows, "g_hat_std", mode=mode, estimator=kind)
                bound = [b if b <= _PLOT_BOUND_MAX else math.nan for b in (r["crb"] for r in sel)]
                ax.plot(xs, std, MARKERS.get(kind, "o"), ms=3, color=COLORS.get(kind), label=f"{kind} std")
                ax.plot(xs, bound, "-", lw=1, color=COLORS.get(kind), label=f"{kind} bound")
            ax.set_yscale("log")
            ax.set_ylabel(r"$\delta(g\Delta)$")
            ax.set_title(f"post-selection: {mode}", fontsize=9)
            ax.legend(loc="best", ncol=2)
        axes[-1, 0].set_xlabel(r"$\theta_i$ (deg)")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_fisher(table: ResultTable, path: Path) -> Path:
    """Fisher information split into its post-selection and meter parts."""
    rows = table.rows
    modes = _modes(rows)
    curves = [("F_pf", r"$F_{p_f}$"), ("pf_F_m", r"$p_f F_m$"), ("pf_F_split", r"$p_f F_{split}$"),
              ("F_total", "total (ideal k)"), ("F_total_split", "total (split)")]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(modes), sharey=True, squeeze=False,
                                 figsize=(3.4 * len(modes), 3.2))
        for ax, mode in zip(axes[0], modes):
            for key, label in curves:
                xs, ys, _ = _series(rows, key, mode=mode)
                ax.plot(xs, ys, lw=1.2, label=label)
            ax.axhline(rows[0]["F_quantum"], color="k", ls="--", lw=0.8, label="quantum")
            ax.set_xlabel(r"$\theta_i$ (deg)")
            ax.set_title(f"post-selection: {mode}", fontsize=9)
        axes[0, 0].set_ylabel(r"$F\Delta^2$")
        axes[0, -1].legend(loc="best")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def render_sweep(table: ResultTable, out_dir: str | Path, stem: str = "sweep") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [
        plot_estimates(table, out / f"{stem}_estimates.png"),
        plot_uncertainty(table, out / f"{stem}_uncertainty.png"),
    ]


def render_fisher(table: ResultTable, out_dir: str | Path, stem: str = "fisher_curves") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [plot_fisher(table, out / f"{stem}.png")]
