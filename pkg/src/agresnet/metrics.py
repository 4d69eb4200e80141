"""Classification metrics: confusion matrix, accuracy, macro-F1.

Rows of the confusion matrix are the true class, columns the predicted
class, in L, R, B, F order. Macro-F1 averages per-class F1 without
weighting; any 0/0 ratio contributes 0 (the pessimistic convention).
"""

from dataclasses import dataclass

import numpy as np

from .dataset import LABELS


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    per_class_accuracy: np.ndarray  # recall per class
    fold_results: list = None


def confusion_matrix(labels, predictions, n_classes: int = 4) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape:
        raise ValueError(
            f"{labels.shape[0]} labels vs {predictions.shape[0]} predictions"
        )
    if labels.size == 0:
        raise ValueError("cannot compute metrics on empty input")
    for arr, what in ((labels, "label"), (predictions, "prediction")):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ValueError(f"{what} outside [0, {n_classes}): "
                             f"{arr.min()}..{arr.max()}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def _safe_div(num, den):
    return num / den if den > 0 else 0.0


def compute_metrics(predictions, labels, n_classes: int = 4):
    """Returns (MetricsReport, confusion matrix)."""
    cm = confusion_matrix(labels, predictions, n_classes)
    total = cm.sum()
    accuracy = float(np.trace(cm)) / total
    f1s = []
    recalls = []
    for c in range(n_classes):
        tp = cm[c, c]
        precision = _safe_div(tp, cm[:, c].sum())
        recall = _safe_div(tp, cm[c].sum())
        f1s.append(_safe_div(2 * precision * recall, precision + recall))
        recalls.append(recall)
    report = MetricsReport(
        accuracy=accuracy,
        macro_f1=float(np.mean(f1s)),
        per_class_accuracy=np.asarray(recalls, dtype=np.float64),
    )
    return report, cm


def format_report(report: MetricsReport, cm: np.ndarray) -> str:
    lines = [
        f"accuracy  {report.accuracy:.4f}",
        f"macro_f1  {report.macro_f1:.4f}",
    ]
    for name, recall in zip(LABELS, report.per_class_accuracy):
        lines.append(f"recall[{name}] {recall:.4f}")
    lines.append("")
    lines.append("confusion (rows true " + ",".join(LABELS) + "; columns predicted)")
    for row in cm:
        lines.append(" ".join(f"{v:8d}" for v in row))
    if report.fold_results:
        lines.append("")
        accs = [r.accuracy for r in report.fold_results if r is not None]
        lines.append(f"folds     {len(report.fold_results)} "
                     f"(failed {sum(r is None for r in report.fold_results)})")
        if accs:
            lines.append(f"fold accuracy median {np.median(accs):.4f} "
                         f"mean {np.mean(accs):.4f} max {np.max(accs):.4f}")
    return "\n".join(lines) + "\n"
