"""PNG figures written next to the CSV/JSON reports.

Figures are a convenience view of the tabular outputs; the CSV and JSON
files remain the primary results.  The Agg backend is forced so rendering
works without a display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings in the files, so reruns stay identical
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def trace_figure(rows: list[dict], path) -> Path:
    """Mean guidance norm and distance to the prototype against the timestep."""
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    if rows:
        ts = np.array([r["step_t"] for r in rows])
        for ax, key, label in ((axes[0], "g_norm", "||m - x0||"), (axes[1], "x0_dist", "||x0 - m|| after step")):
            vals = np.array([r[key] for r in rows], dtype=float)
            uniq = np.unique(ts)[::-1]
            ax.plot(uniq, [vals[ts == t].mean() for t in uniq], marker=".", lw=1)
            ax.set_xlabel("timestep t")
            ax.set_ylabel(label)
            ax.invert_xaxis()
    else:
        for ax in axes:
            ax.text(0.5, 0.5, "no guided steps", ha="center", va="center", transform=ax.transAxes)
    return _save(fig, path)


def accuracy_figure(accuracies: list[float], path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4, 3))
    runs = np.arange(len(accuracies))
    ax.bar(runs, accuracies, color="0.6")
    ax.axhline(float(np.mean(accuracies)), color="k", lw=1, ls="--", label="mean")
    ax.set_xticks(runs)
    ax.set_xlabel("run")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1)
    ax.set_title(title)
    ax.legend(loc="lower right", frameon=False)
    return _save(fig, path)


def metrics_figure(rows: list[dict], path) -> Path:
    """One panel per diversity metric, one bar per method."""
    keys = ("entropy", "coverage", "mpd")
    fig, axes = plt.subplots(1, 3, figsize=(9, 3))
    names = [r["method"] for r in rows]
    for ax, key in zip(axes, keys):
        ax.bar(range(len(rows)), [r[key] for r in rows], color="0.5")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(names, rotation=30, ha="right")
        ax.set_title(key)
    return _save(fig, path)


def sweep_figure(rows: list[dict], path) -> Path:
    """Eval accuracy and representativeness for each sweep cell, in row order."""
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(rows) + 2), 3.2))
    x = np.arange(len(rows))
    acc = [r.get("eval_mean", np.nan) for r in rows]
    rep = [r.get("representativeness", np.nan) for r in rows]
    ax.plot(x, np.array(acc, dtype=float), marker="o", label="eval accuracy")
    ax.plot(x, np.array(rep, dtype=float), marker="s", label="representativeness")
    ax.set_xticks(x)
    ax.set_xticklabels([r["cell"] for r in rows], rotation=40, ha="right", fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)
