"""Confusion matrix, per-class one-vs-rest metrics and the transition audit."""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np

from strata.errors import DimensionError, ValidationError
from strata.synth import CLASS_NAMES, NUM_CLASSES

ALLOWED_TRANSITIONS = frozenset({(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)})
IMPOSSIBLE_TRANSITIONS = ((0, 2), (1, 0), (2, 0), (2, 1))
IMPOSSIBLE_NAMES = tuple(f"{CLASS_NAMES[a]}->{CLASS_NAMES[b]}" for a, b in IMPOSSIBLE_TRANSITIONS)


class ImpossibleCounts(NamedTuple):
    epidermis_to_dermis: int = 0
    dej_to_epidermis: int = 0
    dermis_to_epidermis: int = 0
    dermis_to_dej: int = 0

    @property
    def total(self) -> int:
        return sum(self)

    def __add__(self, other):
        return ImpossibleCounts(*(a + b for a, b in zip(self, other)))


def check_labels(labels, name: str = 'labels') -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise DimensionError(f"{name} must be a 1-D sequence, got shape {labels.shape}")
    if labels.size == 0:
        return labels.astype(np.int64)
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= NUM_CLASSES:
        raise ValidationError(f"{name} must be integers in 0..{NUM_CLASSES - 1}")
    return labels.astype(np.int64)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted, in class order."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (NUM_CLASSES, NUM_CLASSES) or np.any(counts < 0):
            raise ValidationError(f"confusion matrix must be {NUM_CLASSES}x{NUM_CLASSES} non-negative counts")
        object.__setattr__(self, 'counts', counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return ConfusionMatrix(self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tolist(self) -> list[list[int]]:
        return self.counts.tolist()


def confusion_matrix(pred, true) -> ConfusionMatrix:
    pred, true = check_labels(pred, 'predictions'), check_labels(true, 'true labels')
    if pred.shape != true.shape:
        raise ValidationError(f"{pred.shape[0]} predictions for {true.shape[0]} true labels")
    counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class ClassMetrics:
    accuracy: float
    sensitivity: tuple[float, ...]
    specificity: tuple[float, ...]


def _ratio(numerator: int, denominator: int) -> float:
    return numerator / denominator if denominator > 0 else math.nan


def metrics(cm: ConfusionMatrix) -> ClassMetrics:
    """Pooled accuracy plus one-vs-rest sensitivity and specificity; NaN where a class is absent."""
    total = cm.total
    if total == 0:
        raise ValidationError("metrics of an empty confusion matrix are undefined")
    counts = cm.counts
    tp = np.diag(counts)
    fn = counts.sum(axis=1) - tp
    fp = counts.sum(axis=0) - tp
    tn = total - tp - fn - fp
    return ClassMetrics(
        accuracy=int(tp.sum()) / total,
        sensitivity=tuple(_ratio(int(tp[c]), int(tp[c] + fn[c])) for c in range(NUM_CLASSES)),
        specificity=tuple(_ratio(int(tn[c]), int(tn[c] + fp[c])) for c in range(NUM_CLASSES)),
    )


def count_impossible(pred) -> ImpossibleCounts:
    """Count adjacent pairs (going deeper) that break epidermis -> DEJ -> dermis."""
    pred = check_labels(pred, 'predictions')
    above, below = pred[:-1], pred[1:]
    return ImpossibleCounts(*(
        int(np.count_nonzero((above == a) & (below == b))) for a, b in IMPOSSIBLE_TRANSITIONS
    ))
