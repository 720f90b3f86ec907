"""Report figures: confusion matrices, window sweeps and loss curves."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def confusion_figure(report, path, title: str = "confusion") -> Path:
    """Row-normalized confusion matrix with raw counts in the cells."""
    cm = np.asarray(report.confusion, dtype=float)
    rows = cm.sum(axis=1, keepdims=True)
    norm = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    n = len(report.labels)
    size = max(4.0, 0.55 * n + 2)
    fig, ax = plt.subplots(figsize=(size, size))
    ax.imshow(norm, cmap="Blues", vmin=0, vmax=1)
    ax.set_xticks(range(n), report.labels, rotation=60, ha="right", fontsize=8)
    ax.set_yticks(range(n), report.labels, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"{title} (accuracy {report.accuracy:.3f})")
    for i in range(n):
        for j in range(n):
            if cm[i, j]:
                ax.text(j, i, str(int(cm[i, j])), ha="center", va="center", fontsize=7,
                        color="white" if norm[i, j] > 0.5 else "black")
    return _save(fig, path)


def sweep_figure(ws_points: Sequence[int], ws_acc: Sequence[float], wa_points: Sequence[int], wa_acc: Sequence[float], path) -> Path:
    """Accuracy against W_s (frames) and W_a (bursts), side by side."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.5))
    left.plot(ws_points, ws_acc, "o-")
    left.set_xlabel("W_s (frames)")
    left.set_ylabel("app accuracy")
    right.plot(wa_points, wa_acc, "o-", color="tab:orange")
    right.set_xlabel("W_a (bursts)")
    right.set_ylabel("action accuracy")
    for ax in (left, right):
        ax.grid(alpha=0.3)
    return _save(fig, path)


def loss_figure(curves: Mapping[str, Sequence[float]], path) -> Path:
    """Training loss per epoch for one or more models."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, losses in curves.items():
        ax.plot(np.arange(1, len(losses) + 1), losses, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.grid(alpha=0.3)
    if curves:
        ax.legend(fontsize=8)
    return _save(fig, path)
