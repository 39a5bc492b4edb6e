"""Classification metrics: confusion matrix, per-label precision/recall/F1,
and macro averages restricted to labels actually present in the truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedstack.errors import PreconditionError, ShapeMismatchError


@dataclass(eq=False)
class Metrics:
    balanced_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_label_precision: np.ndarray
    per_label_recall: np.ndarray
    per_label_f1: np.ndarray
    confusion: np.ndarray  # (K, K), rows = truth, columns = prediction

    def __eq__(self, other) -> bool:
        if not isinstance(other, Metrics):
            return NotImplemented
        return (
            self.balanced_accuracy == other.balanced_accuracy
            and self.macro_precision == other.macro_precision
            and self.macro_recall == other.macro_recall
            and self.macro_f1 == other.macro_f1
            and np.array_equal(self.per_label_precision, other.per_label_precision)
            and np.array_equal(self.per_label_recall, other.per_label_recall)
            and np.array_equal(self.per_label_f1, other.per_label_f1)
            and np.array_equal(self.confusion, other.confusion)
        )

    def summary_row(self) -> tuple[float, float, float, float]:
        return (
            self.balanced_accuracy,
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
        )


def compute_metrics(
    predictions: np.ndarray, truth: np.ndarray, num_labels: int
) -> Metrics:
    """Score predictions against truth over ``num_labels`` classes.

    Per-label ratios with an empty denominator are defined as 0. Macro
    averages (and balanced accuracy, the mean of per-label recalls) run
    only over labels with at least one true sample, so a slice that never
    contains a label is not punished for it.
    """
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(truth, dtype=np.int64)
    if pred.ndim != 1 or true.ndim != 1 or pred.shape != true.shape:
        raise ShapeMismatchError("predictions and truth must be equal-length vectors")
    if pred.shape[0] < 1:
        raise PreconditionError("cannot score an empty prediction vector")
    for name, arr in (("prediction", pred), ("truth", true)):
        if arr.min() < 0 or arr.max() >= num_labels:
            raise PreconditionError(
                f"{name} label out of range [0, {num_labels})"
            )

    confusion = np.zeros((num_labels, num_labels), dtype=np.int64)
    np.add.at(confusion, (true, pred), 1)

    tp = np.diag(confusion).astype(np.float64)
    true_counts = confusion.sum(axis=1).astype(np.float64)
    pred_counts = confusion.sum(axis=0).astype(np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred_counts > 0, tp / pred_counts, 0.0)
        recall = np.where(true_counts > 0, tp / true_counts, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)

    present = true_counts > 0
    return Metrics(
        balanced_accuracy=float(recall[present].mean()),
        macro_precision=float(precision[present].mean()),
        macro_recall=float(recall[present].mean()),
        macro_f1=float(f1[present].mean()),
        per_label_precision=precision,
        per_label_recall=recall,
        per_label_f1=f1,
        confusion=confusion,
    )
