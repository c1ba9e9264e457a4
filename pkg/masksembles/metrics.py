"""
Accuracy, calibration, uncertainty and diversity metrics.

All logarithms are natural. OOD detection treats out-of-distribution samples
as the positive class and expects higher scores for them.
"""
import math
from dataclasses import astuple
from dataclasses import dataclass
from dataclasses import fields
from typing import List
from typing import Tuple

import numpy as np
from sklearn.metrics import average_precision_score
from sklearn.metrics import roc_auc_score

from masksembles.const import DEFAULT_ECE_BINS
from masksembles.const import METRICS_CSV_HEADER
from masksembles.const import OOD_SCORES
from masksembles.errors import FormatError
from masksembles.errors import UndefinedDiversityError
from masksembles.errors import ValidationError
from masksembles.errors import require

PROBABILITY_TOLERANCE = 1e-6


def _format_cell(kind, value) -> str:
    if kind is str:
        return str(value)
    if kind is int:
        return str(int(value))
    return repr(float(value))


@dataclass
class ReliabilityDiagram:
    bin_edges: np.ndarray
    bin_confidence: np.ndarray
    bin_accuracy: np.ndarray
    bin_count: np.ndarray

    @property
    def num_bins(self) -> int:
        return self.bin_count.shape[0]

    def rows(self) -> List[tuple]:
        """``(bin_lo, bin_hi, confidence, accuracy, count)`` per bin; empty bins report 0."""
        return [(float(self.bin_edges[b]), float(self.bin_edges[b + 1]), float(self.bin_confidence[b]),
                 float(self.bin_accuracy[b]), int(self.bin_count[b]))
                for b in range(self.num_bins)]

    @staticmethod
    def from_rows(rows) -> 'ReliabilityDiagram':
        rows = list(rows)
        require(len(rows) >= 1, 'reliability diagram needs at least one bin')
        edges = [float(rows[0][0])] + [float(row[1]) for row in rows]
        return ReliabilityDiagram(
            bin_edges=np.array(edges),
            bin_confidence=np.array([float(row[2]) for row in rows]),
            bin_accuracy=np.array([float(row[3]) for row in rows]),
            bin_count=np.array([int(row[4]) for row in rows], dtype=np.int64),
        )


@dataclass
class MetricsReport:
    tag: str
    n: int
    m: int
    s: float
    iou: float
    accuracy: float
    ece: float
    mean_entropy_in: float
    mean_entropy_out: float
    ood_roc_auc: float
    ood_pr_auc: float
    model_size: int
    wall_time_seconds: float = 0.0

    def __post_init__(self):
        for name in ('s', 'iou', 'accuracy', 'ece', 'mean_entropy_in', 'mean_entropy_out',
                     'ood_roc_auc', 'ood_pr_auc', 'wall_time_seconds'):
            require(math.isfinite(getattr(self, name)), '%s must be finite (got %s)', name, getattr(self, name))
        for name in ('iou', 'accuracy', 'ece', 'ood_roc_auc', 'ood_pr_auc'):
            require(0.0 <= getattr(self, name) <= 1.0, '%s must be in [0, 1] (got %s)', name, getattr(self, name))

    def to_row(self) -> List[str]:
        return [_format_cell(spec.type, value) for spec, value in zip(fields(self), astuple(self))]

    @staticmethod
    def from_row(row) -> 'MetricsReport':
        row = list(row)
        if len(row) != len(METRICS_CSV_HEADER):
            raise FormatError('metrics row needs %d columns, got %d' % (len(METRICS_CSV_HEADER), len(row)))
        values = []
        for spec, raw in zip(fields(MetricsReport), row):
            try:
                values.append(spec.type(raw))
            except ValueError as e:
                raise FormatError('bad %s value "%s"' % (spec.name, raw)) from e
        return MetricsReport(*values)


def _check_distribution(probs: np.ndarray) -> None:
    if probs.size == 0:
        raise ValidationError('empty probability input')
    if np.any(probs < 0) or np.any(~np.isfinite(probs)):
        raise ValidationError('probabilities must be finite and nonnegative')
    if np.any(np.abs(probs.sum(axis=-1) - 1.0) > PROBABILITY_TOLERANCE):
        raise ValidationError('probabilities must sum to 1 within %g' % PROBABILITY_TOLERANCE)


def entropy_rows(probs) -> np.ndarray:
    """Entropy of every row of a B x C probability matrix; 0 log 0 counts as 0."""
    probs = np.asarray(probs, dtype=np.float64)
    _check_distribution(probs)
    safe = np.where(probs > 0, probs, 1.0)
    return -np.sum(np.where(probs > 0, probs * np.log(safe), 0.0), axis=-1) + 0.0


def entropy(probs) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    require(probs.ndim == 1, 'entropy expects one probability vector (got shape %s)', probs.shape)
    return float(entropy_rows(probs))


def accuracy(preds, labels) -> float:
    preds, labels = np.asarray(preds), np.asarray(labels)
    require(preds.shape == labels.shape, 'predictions %s and labels %s differ in shape', preds.shape, labels.shape)
    require(preds.size > 0, 'accuracy of an empty set is undefined')
    return float(np.mean(preds == labels))


def bin_indices(confidence: np.ndarray, num_bins: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Equal-width bins on [0, 1]; bin ``b`` holds ``(edge_b, edge_b+1]`` and the
    first bin also holds 0.
    """
    edges = np.linspace(0.0, 1.0, num_bins + 1)
    return np.searchsorted(edges[1:-1], confidence, side='left'), edges


def ece(probs, labels, num_bins: int = DEFAULT_ECE_BINS) -> Tuple[float, ReliabilityDiagram]:
    """
    Binned expected calibration error on the max-probability confidence:
    sum over bins of (count_b / B) * |accuracy_b - confidence_b|.
    """
    probs, labels = np.asarray(probs, dtype=np.float64), np.asarray(labels)
    require(num_bins >= 1, 'num_bins must be >= 1 (got %s)', num_bins)
    require(probs.ndim == 2 and probs.shape[0] > 0, 'ece needs a nonempty B x C probability matrix')
    require(labels.shape == (probs.shape[0],), 'labels %s do not match %d samples', labels.shape, probs.shape[0])
    _check_distribution(probs)

    confidence = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(np.float64)
    index, edges = bin_indices(confidence, num_bins)
    count = np.bincount(index, minlength=num_bins)
    confidence_sum = np.bincount(index, weights=confidence, minlength=num_bins)
    correct_sum = np.bincount(index, weights=correct, minlength=num_bins)
    occupied = count > 0
    safe_count = np.maximum(count, 1)
    bin_confidence = np.where(occupied, confidence_sum / safe_count, 0.0)
    bin_accuracy = np.where(occupied, correct_sum / safe_count, 0.0)
    error = float(np.sum(count / probs.shape[0] * np.abs(bin_accuracy - bin_confidence)))
    return error, ReliabilityDiagram(edges, bin_confidence, bin_accuracy, count)


def _split_scores(scores, is_ood) -> Tuple[np.ndarray, np.ndarray]:
    scores, is_ood = np.asarray(scores, dtype=np.float64), np.asarray(is_ood, dtype=bool)
    require(scores.shape == is_ood.shape and scores.ndim == 1,
            'scores %s and flags %s must be equal-length vectors', scores.shape, is_ood.shape)
    require(np.isfinite(scores).all(), 'OOD scores must be finite')
    return scores, is_ood


def roc_auc(scores, is_ood) -> float:
    """
    Probability that a random OOD sample scores above a random in-distribution
    one, ties counting one half (Mann-Whitney U / (P * N)).
    """
    scores, is_ood = _split_scores(scores, is_ood)
    if is_ood.all() or not is_ood.any():
        raise ValidationError('ROC AUC needs both OOD and in-distribution samples')
    return float(roc_auc_score(is_ood, scores))


def pr_auc(scores, is_ood) -> float:
    """
    Area under the precision-recall curve of the OOD class, as the step sum
    over distinct thresholds (descending) of recall increments times precision
    (average precision).
    """
    scores, is_ood = _split_scores(scores, is_ood)
    if not is_ood.any():
        raise ValidationError('PR AUC needs at least one OOD sample')
    return float(average_precision_score(is_ood, scores))


def ood_scores(probs, kind: str = 'entropy') -> np.ndarray:
    """Per-sample OOD score: predictive entropy, or ``1 - max p`` for ``max-prob``."""
    if kind not in OOD_SCORES:
        raise ValidationError('unknown OOD score "%s" (expected one of %s)' % (kind, ', '.join(OOD_SCORES)))
    probs = np.asarray(probs, dtype=np.float64)
    if kind == 'entropy':
        return entropy_rows(probs)
    _check_distribution(probs)
    return 1.0 - probs.max(axis=1)


def disagreement(preds_a, preds_b) -> float:
    preds_a, preds_b = np.asarray(preds_a), np.asarray(preds_b)
    require(preds_a.shape == preds_b.shape, 'prediction vectors differ in shape: %s vs %s',
            preds_a.shape, preds_b.shape)
    require(preds_a.size > 0, 'disagreement of empty predictions is undefined')
    return float(np.mean(preds_a != preds_b))


def diversity(preds_a, preds_b, accuracy: float) -> float:
    """Fraction of disagreeing labels divided by the error rate ``1 - accuracy``."""
    if accuracy >= 1.0:
        raise UndefinedDiversityError('diversity is undefined at accuracy 1.0')
    return disagreement(preds_a, preds_b) / (1.0 - accuracy)


def diversity_bounds(accuracy: float) -> Tuple[float, float]:
    """
    Reference curves for diversity at a given accuracy: 0 below, and above
    min(1 / error, 2), since two models with that error rate can disagree on
    at most min(1, 2 * error) of the samples.
    """
    if accuracy >= 1.0:
        raise UndefinedDiversityError('diversity is undefined at accuracy 1.0')
    error = 1.0 - accuracy
    return 0.0, min(1.0 / error, 2.0)
