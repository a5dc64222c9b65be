"""Report figures rendered to files next to the delimited outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .corpus import LABEL_NAMES


def confusion_figure(cm: np.ndarray, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(cm, cmap="Blues")
    ax.set_xticks(range(len(LABEL_NAMES)), LABEL_NAMES, rotation=30, ha="right")
    ax.set_yticks(range(len(LABEL_NAMES)), LABEL_NAMES)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    thresh = cm.max() / 2 if cm.max() else 0.5
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, str(int(cm[i, j])), ha="center", va="center",
                    color="white" if cm[i, j] > thresh else "black")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def split_accuracy_figure(split_ids: list[tuple[int, int]], accs: list[float],
                          path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(max(5.0, 0.35 * len(accs)), 3.2))
    ax.bar(range(len(accs)), accs, color="#4878b0")
    ax.set_xticks(range(len(accs)),
                  [f"s{s}f{f}" for s, f in split_ids], rotation=60, fontsize=7)
    ax.set_ylabel("best validation accuracy")
    ax.set_ylim(0, 1)
    ax.axhline(float(np.mean(accs)), color="gray", linestyle="--", linewidth=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def trial_scores_figure(scores: list[float], path: str | Path) -> None:
    best_so_far = np.maximum.accumulate(scores)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(scores, "o", markersize=4, label="trial score")
    ax.plot(best_so_far, "-", color="#d65f5f", label="best so far")
    ax.set_xlabel("trial")
    ax.set_ylabel("mean CV accuracy")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
