"""Report figures, written as SVG files.

Figures are rendered with the non-interactive Agg backend and a fixed SVG
hash salt with no date metadata, so reruns produce identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "edgereplay",
    "svg.fonttype": "path",
}

METHOD_COLORS = {
    "offline_classifier": "#7f7f7f",
    "offline_regressor": "#000000",
    "incremental": "#d62728",
    "buffer": "#ff7f0e",
    "selection": "#1f77b4",
    "icarl": "#2ca02c",
    "ewc": "#9467bd",
    "lwf": "#8c564b",
}


def _save(fig, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    fig.savefig(tmp, format="svg", metadata={"Date": None})
    plt.close(fig)
    tmp.replace(path)


def plot_auc_vs_time(
    path,
    hours: Mapping[str, np.ndarray],
    mean: Mapping[str, np.ndarray],
    ci: Mapping[str, np.ndarray],
) -> None:
    """Mean AUC across folds with a 95% band, one line per method."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        for method in mean:
            c = METHOD_COLORS.get(method)
            h, m, w = hours[method], mean[method], ci[method]
            ax.plot(h, m, color=c, lw=1.4, label=method)
            ax.fill_between(h, m - w, m + w, color=c, alpha=0.15, lw=0)
        ax.axhline(0.5, color="0.5", lw=0.8, ls=":")
        ax.set_xlabel("training time [h]")
        ax.set_ylabel("AUC")
        ax.set_ylim(0.0, 1.0)
        ax.legend(ncol=4, loc="lower right", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_auc_boxplot(path, per_fold: Mapping[str, Sequence[float]]) -> None:
    """Distribution across folds of each method's time-averaged AUC."""
    methods = list(per_fold)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 3.4))
        box = ax.boxplot([list(per_fold[m]) for m in methods], patch_artist=True, widths=0.6,
                         medianprops={"color": "k"})
        for patch, m in zip(box["boxes"], methods):
            patch.set_facecolor(METHOD_COLORS.get(m, "#cccccc"))
            patch.set_alpha(0.5)
        ax.set_xticks(range(1, len(methods) + 1), methods, rotation=30, ha="right")
        ax.set_ylabel("mean AUC over training")
        ax.set_ylim(0.0, 1.0)
        fig.tight_layout()
        _save(fig, path)


def plot_monitor(path, result) -> None:
    """Measured vs predicted temperature on top, squared error vs threshold below."""
    h = result.hours
    with plt.rc_context(STYLE):
        fig, (top, bottom) = plt.subplots(2, 1, figsize=(6.4, 4.8), sharex=True)
        top.plot(h, result.t_hs, color="#ff7f0e", lw=0.9, label="measured")
        top.plot(h, result.t_hs_pred, color="#1f77b4", lw=0.9, label="predicted")
        top.set_ylabel("heat sink temperature [°C]")
        top.legend(frameon=False, loc="upper left")

        bottom.semilogy(h, np.maximum(result.sq_error, 1e-9), color="#1f77b4", lw=0.6, label="squared error")
        thr = np.where(np.isfinite(result.threshold), result.threshold, np.nan)
        bottom.semilogy(h, thr, color="k", lw=1.0, ls="--", label="threshold", zorder=4)
        pos = result.verdict.astype(bool)
        bottom.scatter(h[pos], np.maximum(result.sq_error[pos], 1e-9), s=2, color="#d62728", zorder=3,
                       label="flagged")
        bottom.set_ylabel("squared error (normalized)")
        bottom.set_xlabel("test run time [h]")
        bottom.legend(frameon=False, loc="upper left")

        fit_end = h[min(result.fit_samples, len(h) - 1)]
        onset = result.anomaly_onset_hours
        for ax in (top, bottom):
            ax.axvspan(h[0], fit_end, color="0.85", alpha=0.5, lw=0)
            if onset is not None:
                ax.axvline(onset, color="0.3", ls="--", lw=0.8)
        top.set_title(
            f"FPR {100 * result.false_positive_rate:.1f}%  "
            f"TPR {100 * result.true_positive_rate:.1f}%"
        )
        fig.tight_layout()
        _save(fig, path)
