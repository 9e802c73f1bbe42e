"""Binary-classification evaluation: confusion counts, precision/recall/F1/
accuracy, ROC curve with tie handling, trapezoidal AUC, and an independent
rank-based AUC oracle."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, LengthMismatch, SingleClassError
from .head import DropoutSpec, HeadParams, forward_batch


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class RocCurve:
    """Ordered (false-positive rate, true-positive rate) points from (0,0)
    to (1,1), both coordinates non-decreasing."""

    points: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class EvalReport:
    """The five evaluation metrics at one decision threshold.

    Undefined metrics (e.g. precision with no predicted positives, AUC with
    one class) are None, never silently zero.
    """

    auc: float | None
    precision: float | None
    recall: float | None
    f_score: float | None
    accuracy: float
    confusion: ConfusionMatrix
    threshold: float

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "precision": self.precision,
            "recall": self.recall,
            "f_score": self.f_score,
            "accuracy": self.accuracy,
            "threshold": self.threshold,
            "confusion": {"tp": self.confusion.tp, "fp": self.confusion.fp,
                          "fn": self.confusion.fn, "tn": self.confusion.tn},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_inputs(scores, labels):
    if len(scores) != len(labels):
        raise LengthMismatch(f"{len(scores)} scores vs {len(labels)} labels")
    if len(scores) == 0:
        raise EmptyInput("no examples")


def confusion_matrix(scores, labels, threshold: float) -> ConfusionMatrix:
    """Tally the four cells; a score counts as predicted positive iff
    score >= threshold."""
    _check_inputs(scores, labels)
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    return ConfusionMatrix(tp, fp, fn, tn)


def classification_metrics(cm: ConfusionMatrix):
    """(precision, recall, f_score, accuracy); undefined entries are None.

    F is the harmonic mean of precision and recall (F1).
    """
    if cm.total == 0:
        raise EmptyInput("empty confusion matrix")
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp > 0 else None
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn > 0 else None
    if precision is None or recall is None or precision + recall == 0:
        f_score = None
    else:
        f_score = 2 * precision * recall / (precision + recall)
    accuracy = (cm.tp + cm.tn) / cm.total
    return precision, recall, f_score, accuracy


def roc_curve(scores, labels) -> RocCurve:
    """Threshold sweep at every distinct score, descending; tied scores
    advance together as a single step."""
    _check_inputs(scores, labels)
    y = np.asarray(labels)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("ROC needs both classes present")
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = len(s)
    while i < n:
        j = i
        while j < n and s[j] == s[i]:
            tp += int(y[j] == 1)
            fp += int(y[j] == 0)
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j
    return RocCurve(tuple(points))


def auc_trapezoid(curve: RocCurve) -> float:
    """Trapezoidal integral of the ROC curve."""
    area = 0.0
    pts = curve.points
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def auc_rank_oracle(scores, labels) -> float:
    """Fraction of (positive, negative) pairs with score_pos > score_neg,
    ties counted as one half.  Deliberately brute force: this is the
    independent oracle for the trapezoid path."""
    _check_inputs(scores, labels)
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    if not pos or not neg:
        raise SingleClassError("AUC needs both classes present")
    wins = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def evaluate(p: HeadParams, examples, threshold: float = 0.5) -> EvalReport:
    """Inference-mode scoring of labeled examples plus all five metrics.

    AUC is None when only one class is present; the other metrics are
    still computed.
    """
    if len(examples) == 0:
        raise EmptyInput("no examples to evaluate")
    x = np.stack([ex.embedding for ex in examples])
    labels = [ex.label for ex in examples]
    scores, _ = forward_batch(p, x, DropoutSpec(mode="inference"))
    cm = confusion_matrix(scores, labels, threshold)
    precision, recall, f_score, accuracy = classification_metrics(cm)
    if len(set(labels)) < 2:
        auc = None
    else:
        auc = auc_trapezoid(roc_curve(scores, labels))
    return EvalReport(auc, precision, recall, f_score, accuracy, cm, threshold)
