"""Confusion matrices and the class-balanced scores built on them."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ConfigError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = truth and columns = prediction."""

    classes: tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["truth\\predicted", *self.classes])
        for name, row in zip(self.classes, self.counts):
            w.writerow([name, *(int(v) for v in row)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "counts": self.counts.astype(int).tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ConfusionMatrix":
        return cls(tuple(d["classes"]), np.asarray(d["counts"], dtype=np.int64))

    def permuted(self, perm: Sequence[int]) -> "ConfusionMatrix":
        """Reorder classes so that new class ``i`` is old class ``perm[i]``."""
        p = np.asarray(perm)
        return ConfusionMatrix(tuple(self.classes[i] for i in p), self.counts[np.ix_(p, p)])


def confusion(truth: Sequence[int], predicted: Sequence[int], classes: Sequence[str]) -> ConfusionMatrix:
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise ConfigError(f"{len(truth)} truth labels but {len(predicted)} predictions")
    k = len(classes)
    if truth.size and (min(truth.min(), predicted.min()) < 0 or max(truth.max(), predicted.max()) >= k):
        raise ConfigError("label outside the class table")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (truth, predicted), 1)
    return ConfusionMatrix(tuple(classes), counts)


def _check(cm: ConfusionMatrix) -> None:
    if cm.total == 0:
        raise ConfigError("scores of an all-zero confusion matrix are undefined")


def per_class_recall(cm: ConfusionMatrix) -> np.ndarray:
    support = cm.support
    diag = np.diag(cm.counts)
    return np.divide(diag, support, out=np.zeros(len(support)), where=support > 0)


def accuracy(cm: ConfusionMatrix) -> float:
    _check(cm)
    return float(np.trace(cm.counts) / cm.total)


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    """Mean recall over classes with non-zero support."""
    _check(cm)
    present = cm.support > 0
    return float(per_class_recall(cm)[present].mean())


def per_class_f1(cm: ConfusionMatrix) -> np.ndarray:
    """F1 per class; 0 where precision + recall is 0."""
    diag = np.diag(cm.counts).astype(float)
    pred_tot = cm.counts.sum(axis=0)
    precision = np.divide(diag, pred_tot, out=np.zeros_like(diag), where=pred_tot > 0)
    recall = per_class_recall(cm)
    denom = precision + recall
    return np.divide(2 * precision * recall, denom, out=np.zeros_like(diag), where=denom > 0)


def weighted_f1(cm: ConfusionMatrix) -> float:
    """Support-weighted mean of per-class F1."""
    _check(cm)
    support = cm.support
    return float((per_class_f1(cm) * support).sum() / support.sum())
