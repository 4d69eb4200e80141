"""Report files: human-readable text, delimited CSV, and rendered figures.

Every report path writes deterministic names under the output
directory: report.txt, confusion.csv, folds.csv, metrics.csv, plus the
matching PNG figures (confusion heatmap, training curves, fold box
plot) next to them.
"""

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dataset import LABELS
from .metrics import MetricsReport, format_report


def write_report_text(out_dir, report: MetricsReport, cm: np.ndarray) -> str:
    path = os.path.join(out_dir, "report.txt")
    with open(path, "w") as fh:
        fh.write(format_report(report, cm))
    return path


def write_confusion_csv(out_dir, cm: np.ndarray) -> str:
    path = os.path.join(out_dir, "confusion.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + list(LABELS))
        for name, row in zip(LABELS, cm):
            writer.writerow([name] + [int(v) for v in row])
    return path


def write_folds_csv(out_dir, fold_reports) -> str:
    path = os.path.join(out_dir, "folds.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "accuracy", "macro_f1", "status"])
        for k, rep in enumerate(fold_reports):
            if rep is None:
                writer.writerow([k, "", "", "failed"])
            else:
                writer.writerow([k, f"{rep.accuracy:.6f}", f"{rep.macro_f1:.6f}", "ok"])
    return path


def write_metrics_csv(out_dir, rows) -> str:
    path = os.path.join(out_dir, "metrics.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "train_loss", "train_acc", "test_loss", "test_acc"])
        writer.writerows(rows)
    return path


def plot_confusion(out_dir, cm: np.ndarray) -> str:
    path = os.path.join(out_dir, "confusion.png")
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    shares = cm / np.maximum(cm.sum(axis=1, keepdims=True), 1)
    im = ax.imshow(shares, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(LABELS)), LABELS)
    ax.set_yticks(range(len(LABELS)), LABELS)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, str(int(cm[i, j])), ha="center", va="center",
                    color="black" if shares[i, j] < 0.5 else "white", fontsize=8)
    fig.colorbar(im, ax=ax, label="row share")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_curves(out_dir, rows) -> str:
    path = os.path.join(out_dir, "curves.png")
    rows = list(rows)
    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(8.4, 3.3))
    if rows:
        it = [r[0] for r in rows]
        ax_acc.plot(it, [r[2] for r in rows], label="train")
        ax_acc.plot(it, [r[4] for r in rows], label="test")
        ax_loss.plot(it, [r[1] for r in rows], label="train")
        ax_loss.plot(it, [r[3] for r in rows], label="test")
    ax_acc.set_xlabel("iteration")
    ax_acc.set_ylabel("accuracy")
    ax_acc.legend()
    ax_loss.set_xlabel("iteration")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_folds(out_dir, fold_reports) -> str:
    path = os.path.join(out_dir, "folds.png")
    accs = [r.accuracy for r in fold_reports if r is not None]
    fig, ax = plt.subplots(figsize=(3.6, 3.6))
    if accs:
        ax.boxplot([accs], tick_labels=["accuracy"])
        ax.scatter(np.ones(len(accs)), accs, s=12, alpha=0.6, zorder=3)
    ax.set_ylabel("fold accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def write_evaluation_outputs(out_dir, report, cm) -> list:
    os.makedirs(out_dir, exist_ok=True)
    return [
        write_report_text(out_dir, report, cm),
        write_confusion_csv(out_dir, cm),
        plot_confusion(out_dir, cm),
    ]


def write_training_outputs(out_dir, rows) -> list:
    os.makedirs(out_dir, exist_ok=True)
    return [write_metrics_csv(out_dir, rows), plot_curves(out_dir, rows)]


def write_fold_outputs(out_dir, summary_report, cm, fold_reports) -> list:
    os.makedirs(out_dir, exist_ok=True)
    return [
        write_report_text(out_dir, summary_report, cm),
        write_confusion_csv(out_dir, cm),
        plot_confusion(out_dir, cm),
        write_folds_csv(out_dir, fold_reports),
        plot_folds(out_dir, fold_reports),
    ]
