"""Evaluation metrics: accuracy, macro-averaged F1 and average recall, with
confusion matrices and per-category breakdowns.

Zero-denominator conventions: an empty gold row gives recall 0, an empty
predicted column gives precision 0, and F1 is 0 whenever precision and
recall are both 0. This keeps degenerate predictions well-defined.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import LABEL_NAMES, N_CLASSES
from .errors import DataError


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    avg_rec: float
    confusion: np.ndarray  # (3, 3) counts, rows gold, cols predicted
    recall: np.ndarray = field(default=None)  # type: ignore[assignment]
    precision: np.ndarray = field(default=None)  # type: ignore[assignment]
    f1: np.ndarray = field(default=None)  # type: ignore[assignment]
    per_category: dict[str, "MetricsReport"] | None = None


def confusion(gold: Sequence[int], pred: Sequence[int]) -> np.ndarray:
    if len(gold) != len(pred):
        raise DataError(f"gold has {len(gold)} labels, predictions {len(pred)}")
    if len(gold) == 0:
        raise DataError("cannot build a confusion matrix from zero pairs")
    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for g, p in zip(gold, pred):
        cm[int(g), int(p)] += 1
    return cm


def metrics(cm: np.ndarray) -> MetricsReport:
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise DataError("empty confusion matrix")
    diag = np.diag(cm).astype(np.float64)
    row = cm.sum(axis=1).astype(np.float64)
    col = cm.sum(axis=0).astype(np.float64)
    recall = np.divide(diag, row, out=np.zeros(N_CLASSES), where=row > 0)
    precision = np.divide(diag, col, out=np.zeros(N_CLASSES), where=col > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(N_CLASSES), where=denom > 0)
    return MetricsReport(
        accuracy=float(diag.sum() / total),
        macro_f1=float(f1.mean()),
        avg_rec=float(recall.mean()),
        confusion=cm,
        recall=recall,
        precision=precision,
        f1=f1,
    )


def evaluate(gold: Sequence[int], pred: Sequence[int]) -> MetricsReport:
    return metrics(confusion(gold, pred))


def evaluate_by_category(gold: Sequence[int], pred: Sequence[int],
                         categories: Sequence[str]) -> MetricsReport:
    """Overall report plus one sub-report per forum category."""
    report = evaluate(gold, pred)
    per_category = {}
    for cat in sorted(set(categories)):
        idx = [i for i, c in enumerate(categories) if c == cat]
        per_category[cat] = evaluate([gold[i] for i in idx], [pred[i] for i in idx])
    report.per_category = per_category
    return report


def format_report(report: MetricsReport) -> str:
    """Human-readable table, with per-category sections when present."""
    lines = [
        f"accuracy  {report.accuracy:.4f}",
        f"macro_f1  {report.macro_f1:.4f}",
        f"avg_rec   {report.avg_rec:.4f}",
        "",
        "confusion (rows gold, cols predicted):",
        "             " + " ".join(f"{n:>11}" for n in LABEL_NAMES),
    ]
    for i, name in enumerate(LABEL_NAMES):
        lines.append(f"{name:>12} " + " ".join(f"{int(v):>11}" for v in report.confusion[i]))
    lines.append("")
    lines.append("class        recall  precision  f1")
    for i, name in enumerate(LABEL_NAMES):
        lines.append(f"{name:>12} {report.recall[i]:.4f}  {report.precision[i]:.4f}     {report.f1[i]:.4f}")
    if report.per_category:
        for cat, sub in report.per_category.items():
            lines.append("")
            lines.append(f"[category: {cat}]  n={int(sub.confusion.sum())}")
            lines.append(f"  accuracy {sub.accuracy:.4f}  macro_f1 {sub.macro_f1:.4f}  avg_rec {sub.avg_rec:.4f}")
    return "\n".join(lines) + "\n"


def metrics_records(report: MetricsReport) -> list[tuple[str, float]]:
    """Flat (name, value) pairs for the machine-readable record file."""
    records = [
        ("accuracy", report.accuracy),
        ("macro_f1", report.macro_f1),
        ("avg_rec", report.avg_rec),
    ]
    for i, name in enumerate(LABEL_NAMES):
        records.append((f"recall_{name}", float(report.recall[i])))
        records.append((f"precision_{name}", float(report.precision[i])))
        records.append((f"f1_{name}", float(report.f1[i])))
    if report.per_category:
        for cat, sub in report.per_category.items():
            records.append((f"category/{cat}/accuracy", sub.accuracy))
            records.append((f"category/{cat}/macro_f1", sub.macro_f1))
            records.append((f"category/{cat}/avg_rec", sub.avg_rec))
    return records


def write_report(report: MetricsReport, txt_path: str | Path,
                 tsv_path: str | Path) -> None:
    Path(txt_path).write_text(format_report(report), encoding="utf-8")
    with Path(tsv_path).open("w", encoding="utf-8") as fh:
        for name, value in metrics_records(report):
            fh.write(f"{name}\t{value:.6f}\n")
