"""Matplotlib figures written next to the CSV reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}

MODE_STYLE = {
    "SAKR": dict(color="C0", marker="o"),
    "streaming_only": dict(color="C1", marker="s"),
    "clustering_only": dict(color="C2", marker="^"),
    "naive": dict(color="C3", marker="x"),
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_sweep(rows: Sequence, path: str | Path) -> Path:
    """Accuracy and scanned candidates against cluster count."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ms = [r.m for r in rows]
        ax.plot(ms, [r.accuracy for r in rows], "o-", color="C0", label="precision@K")
        ax.set_xlabel("number of clusters m")
        ax.set_ylabel("precision@K")
        ax.set_ylim(-0.02, 1.02)
        if len(ms) > 1 and max(ms) / max(1, min(ms)) >= 8:
            ax.set_xscale("log", base=2)
        ax2 = ax.twinx()
        ax2.plot(ms, [r.candidates_scanned for r in rows], "s--", color="C1", label="candidates scanned")
        ax2.set_ylabel("candidates scanned")
        ax2.spines["right"].set_visible(True)
        lines = ax.get_lines() + ax2.get_lines()
        ax.legend(lines, [ln.get_label() for ln in lines], loc="lower right", frameon=False)
        return _save(fig, path)


def plot_grid(header: Sequence[str], rows: Sequence[Sequence], path: str | Path) -> Path:
    """Accuracy against retrieval depth, one line per ablation mode."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ks = [row[0] for row in rows]
        for col, name in enumerate(header[1:], start=1):
            mode = name.removeprefix("accuracy_")
            ys = [row[col] for row in rows]
            ax.plot(ks, ys, label=mode, **MODE_STYLE.get(mode, {}))
        ax.set_xlabel("K (documents retrieved)")
        ax.set_ylabel("precision@K")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_bench(rows: Sequence, path: str | Path) -> Path:
    """Median query latency per corpus size, log-log."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for method, style in (("clustered", "o-"), ("naive", "s--")):
            pts = [(r.size, r.median_elapsed_us) for r in rows if r.method == method and r.median_elapsed_us]
            if pts:
                xs, ys = zip(*pts)
                ax.plot(xs, ys, style, label=method)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("snapshot size")
        ax.set_ylabel("median latency (us)")
        if ax.get_lines():
            ax.legend(frameon=False)
        return _save(fig, path)
