"""Matplotlib figure rendering for the report paths.

Figures are written next to the delimited/JSON reports: loss history after
training, per-fold ROC/PR curves after cross-validation, and the
contribution-by-node-kind distribution after an explainability run. Subgraph
drawing stays out of here; the DOT/GraphML exports feed external tools.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import pr_curve, roc_curve

_FIGSIZE = (5.0, 3.6)


def loss_history_figure(loss_history: list[float], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(np.arange(1, len(loss_history) + 1), loss_history, lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.grid(True, lw=0.3, alpha=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def roc_figure(details: list[dict], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for d in details:
        fpr, tpr = roc_curve(d["scores"], d["labels"])
        ax.plot(fpr, tpr, lw=1.0, label=f"fold {d['fold']}")
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(fontsize=7)
    ax.grid(True, lw=0.3, alpha=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def pr_figure(details: list[dict], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for d in details:
        recall, precision = pr_curve(d["scores"], d["labels"])
        ax.plot(recall, precision, lw=1.0, drawstyle="steps-post", label=f"fold {d['fold']}")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=7)
    ax.grid(True, lw=0.3, alpha=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def ig_distribution_figure(ig_samples: list[dict], path: str | Path) -> None:
    """Box plot of neighborhood contribution values per node kind."""
    kinds = sorted({s["kind"] for s in ig_samples})
    data = [[s["ig"] for s in ig_samples if s["kind"] == k] for k in kinds]
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    if any(len(d) for d in data):
        ax.boxplot(data, tick_labels=kinds, showfliers=True)
    ax.set_ylabel("contribution (L2 of feature x avg gradient)")
    ax.grid(True, axis="y", lw=0.3, alpha=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
