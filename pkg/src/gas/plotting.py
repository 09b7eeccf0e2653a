"""Report figures, written next to the text output of the CLI."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CHANNEL_COLORS = {"r": "tab:red", "g": "tab:green", "b": "tab:blue", "dx": "0.2", "dy": "0.55"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_losses(metrics, path, smooth: int = 50) -> Path:
    """Per-step losses with a trailing moving average on top."""
    steps = np.array([r["step"] for r in metrics])
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for key, color in (("loss_d", "tab:blue"), ("loss_g", "tab:orange")):
        y = np.array([r[key] for r in metrics], dtype=float)
        ax.plot(steps, y, color=color, alpha=0.25, lw=0.8)
        if len(y) >= smooth > 1:
            avg = np.convolve(y, np.ones(smooth) / smooth, mode="valid")
            ax.plot(steps[smooth - 1 :], avg, color=color, lw=1.6, label=f"{key} ({smooth}-step mean)")
        else:
            ax.plot([], [], color=color, label=key)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_histograms(named_sets: dict, path, title: str = "") -> Path:
    """One panel per row of the histogram sets, one line per named set."""
    first = next(iter(named_sets.values()))
    rows = len(first.labels)
    fig, axes = plt.subplots(1, rows, figsize=(3.2 * rows, 2.8), sharey=False)
    axes = np.atleast_1d(axes)
    x = np.linspace(0.0, 1.0, first.bins)
    styles = ["-", "--", ":", "-."]
    for i, ax in enumerate(axes):
        label = first.labels[i]
        for j, (name, hs) in enumerate(named_sets.items()):
            ax.plot(x, hs.hist[i], styles[j % len(styles)], color=CHANNEL_COLORS.get(label, "k"),
                    alpha=1.0 - 0.25 * j, lw=1.1, label=name)
        ax.set_title(label, fontsize=9)
        ax.set_xlim(0, 1)
    axes[0].legend(frameon=False, fontsize=7)
    if title:
        fig.suptitle(title, fontsize=10)
    return _save(fig, path)


def plot_bench(stats_list, path) -> Path:
    labels = [f"{s.width}x{s.height}" for s in stats_list]
    pos = np.arange(len(stats_list))
    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    ax.bar(pos - 0.2, [s.mean_ms for s in stats_list], 0.4, yerr=[s.std_ms for s in stats_list],
           label="fused", color="tab:blue")
    ax.bar(pos + 0.2, [s.ref_mean_ms for s in stats_list], 0.4, label="reference", color="0.6")
    ax.set_xticks(pos, labels)
    ax.set_ylabel("ms / frame")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_gradcheck(report, path) -> Path:
    err = np.maximum(np.asarray(report.rel_err, dtype=float), 1e-16)
    fig, ax = plt.subplots(figsize=(9.0, 3.2))
    colors = ["tab:red" if e > report.threshold else "tab:blue" for e in err]
    ax.bar(np.arange(len(err)), err, color=colors)
    ax.axhline(report.threshold, color="k", lw=0.8, ls="--")
    ax.set_yscale("log")
    ax.set_xticks(np.arange(len(err)), report.names, rotation=90, fontsize=6)
    ax.set_ylabel("relative error")
    return _save(fig, path)
