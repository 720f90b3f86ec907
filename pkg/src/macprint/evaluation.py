"""Accuracy, macro F1, per-class precision/recall and confusion matrices."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from macprint.catalog import UNKNOWN


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n: int) -> np.ndarray:
    cm = np.zeros((n, n), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def per_class(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Precision, recall, F1 and support per class (0 where undefined)."""
    tp = np.diag(cm).astype(float)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1, support


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray, n: int) -> float:
    """Mean F1 over the classes that occur in ``y_true``."""
    cm = confusion_matrix(y_true, y_pred, n)
    _, _, f1, support = per_class(cm)
    has = support > 0
    return float(f1[has].mean()) if has.any() else 0.0


@dataclass
class EvalReport:
    labels: list[str]
    confusion: np.ndarray
    accuracy: float
    macro_f1: float
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    support: dict[str, int]
    unknown_recall: Optional[float] = None
    known_accuracy: Optional[float] = None
    config: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "labels": self.labels,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
            "unknown_recall": self.unknown_recall,
            "known_accuracy": self.known_accuracy,
            "confusion": self.confusion.tolist(),
            "config": self.config,
        }

    def to_text(self, title: str = "evaluation") -> str:
        lines = [f"== {title} ==", f"units        {self.total}", f"accuracy     {self.accuracy:.4f}", f"macro F1     {self.macro_f1:.4f}"]
        if self.known_accuracy is not None:
            lines.append(f"known acc.   {self.known_accuracy:.4f}")
        if self.unknown_recall is not None:
            lines.append(f"unknown rec. {self.unknown_recall:.4f}")
        width = max(len(x) for x in self.labels) + 2
        lines.append("")
        lines.append(f"{'class':<{width}} precision  recall  f1      support")
        for lab in self.labels:
            lines.append(
                f"{lab:<{width}} {self.precision[lab]:9.4f}  {self.recall[lab]:6.4f}  {self.f1[lab]:6.4f}  {self.support[lab]:7d}"
            )
        lines.append("")
        lines.append("confusion (rows = truth, columns = prediction)")
        lines.append(" " * width + " ".join(f"{lab[:8]:>8}" for lab in self.labels))
        for lab, row in zip(self.labels, self.confusion):
            lines.append(f"{lab:<{width}}" + " ".join(f"{v:8d}" for v in row))
        return "\n".join(lines) + "\n"

    def confusion_csv(self) -> str:
        out = ["truth\\pred," + ",".join(self.labels)]
        for lab, row in zip(self.labels, self.confusion):
            out.append(lab + "," + ",".join(str(int(v)) for v in row))
        return "\n".join(out) + "\n"

    def write(self, out_dir, name: str = "report", figure: bool = True) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / f"{name}.txt", out_dir / f"{name}.json", out_dir / f"{name}_confusion.csv"]
        paths[0].write_text(self.to_text(name))
        paths[1].write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        paths[2].write_text(self.confusion_csv())
        if figure:
            from macprint import plotting

            paths.append(plotting.confusion_figure(self, out_dir / f"{name}_confusion.png", title=name))
        return paths


def evaluate(
    y_true: Sequence[str],
    y_pred: Sequence[str],
    labels: Optional[Sequence[str]] = None,
    config: Optional[dict] = None,
) -> EvalReport:
    """Score aligned label sequences. ``labels`` fixes the class order;
    by default it is the sorted union with ``unknown`` last."""
    if len(y_true) == 0:
        raise ValueError("nothing to evaluate")
    if len(y_true) != len(y_pred):
        raise ValueError("prediction and truth lengths differ")
    if labels is None:
        seen = set(y_true) | set(y_pred)
        labels = sorted(seen - {UNKNOWN}) + ([UNKNOWN] if UNKNOWN in seen else [])
    labels = list(labels)
    index = {lab: i for i, lab in enumerate(labels)}
    missing = (set(y_true) | set(y_pred)) - set(index)
    if missing:
        raise ValueError(f"labels not in the class list: {sorted(missing)}")
    t = np.array([index[v] for v in y_true])
    p = np.array([index[v] for v in y_pred])
    cm = confusion_matrix(t, p, len(labels))
    precision, recall, f1, support = per_class(cm)
    has = support > 0
    report = EvalReport(
        labels=labels,
        confusion=cm,
        accuracy=float(np.trace(cm) / cm.sum()),
        macro_f1=float(f1[has].mean()),
        precision={lab: float(precision[i]) for i, lab in enumerate(labels)},
        recall={lab: float(recall[i]) for i, lab in enumerate(labels)},
        f1={lab: float(f1[i]) for i, lab in enumerate(labels)},
        support={lab: int(support[i]) for i, lab in enumerate(labels)},
        config=dict(config or {}),
    )
    if UNKNOWN in index:
        u = index[UNKNOWN]
        if support[u] > 0:
            report.unknown_recall = float(recall[u])
        known = t != u
        if known.any():
            report.known_accuracy = float(np.mean(p[known] == t[known]))
    return report
