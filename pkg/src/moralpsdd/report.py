"""Figures written next to the delimited reports.

Agg backend only, fixed sizes and no timestamp metadata, so the same
report renders to the same PNG bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .blame import BlameReport  # noqa: E402
from .utility import UtilityFunction  # noqa: E402

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 100,
    "svg.hashsalt": "moralpsdd",
}
PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="png", metadata=PNG_META)
    plt.close(fig)
    return path


def plot_blame(r: BlameReport, path) -> Path:
    """delta and db_N per alternative, with the cost of each action alongside."""
    with plt.rc_context(STYLE):
        fig, (ax, bx) = plt.subplots(1, 2, figsize=(8, 3.2))
        labels = [p.alternative for p in r.pairs]
        x = np.arange(len(labels))
        ax.bar(x - 0.2, [p.delta for p in r.pairs], 0.4, label="delta", color="#9aa7b8")
        ax.bar(x + 0.2, [p.db for p in r.pairs], 0.4, label=f"db (N={r.N:.3g})", color="#33495e")
        ax.set_xticks(x, labels)
        ax.set_ylim(0, max([1e-3] + [p.delta for p in r.pairs]) * 1.15)
        ax.set_title(f"{r.event} under do({r.action})")
        ax.set_xlabel("alternative")
        ax.legend(frameon=False)
        names = list(r.costs)
        colors = ["#c0504d" if n == r.action else "#9aa7b8" for n in names]
        bx.bar(np.arange(len(names)), [r.costs[n] for n in names], color=colors)
        bx.set_xticks(np.arange(len(names)), names)
        bx.axhline(0, color="black", lw=0.6)
        bx.set_title("cost c(a)")
        fig.tight_layout()
        return _save(fig, path)


def plot_utility(u: UtilityFunction, path) -> Path:
    """Learned weights: one bar group per context (linear form) or value per outcome."""
    with plt.rc_context(STYLE):
        keys = sorted(u.weights, key=lambda k: () if k is None else k)
        if u.linear:
            fig, ax = plt.subplots(figsize=(max(4, 0.45 * len(u.outcomes) * max(1, len(keys)) ** 0.5 + 2), 3.2))
            x = np.arange(len(u.outcomes))
            width = 0.8 / len(keys)
            for i, k in enumerate(keys):
                lab = "all contexts" if k is None else "".join(map(str, k))
                ax.bar(x + (i - (len(keys) - 1) / 2) * width, u.weights[k], width, label=lab)
            ax.set_xticks(x, u.outcomes, rotation=45, ha="right")
            ax.set_ylabel("weight")
            if len(keys) > 1:
                ax.legend(frameon=False, fontsize=7, ncol=2)
        else:
            fig, ax = plt.subplots(figsize=(5, 3.2))
            for i, k in enumerate(keys):
                items = sorted(u.weights[k].items())
                ax.plot(range(len(items)), [v for _, v in items], "o-", ms=3,
                        label="all contexts" if k is None else "".join(map(str, k)))
            ax.set_xlabel("outcome (sorted bitstring)")
            ax.set_ylabel("utility")
        ax.set_title("learned utility")
        fig.tight_layout()
        return _save(fig, path)
