"""Binary classification metrics: accuracy, F1 (Responder positive) and AUC."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .errors import LengthMismatch, SingleClass


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1: float
    auc: Optional[float]

    def to_dict(self):
        return {"accuracy": self.accuracy, "f1": self.f1, "auc": self.auc}


def _pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise LengthMismatch(f"{pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise LengthMismatch("empty input")
    return pred, truth


def accuracy(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(pred == truth))


def f1_binary(pred, truth, positive=1) -> float:
    pred, truth = _pair(pred, truth)
    tp = np.sum((pred == positive) & (truth == positive))
    fp = np.sum((pred == positive) & (truth != positive))
    fn = np.sum((pred != positive) & (truth == positive))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return float(2 * precision * recall / (precision + recall))


def auc(scores, truth, positive=1) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs earn half credit."""
    scores, truth = _pair(np.asarray(scores, dtype=np.float64), truth)
    pos = truth == positive
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def binary_metrics(pred, scores, truth) -> Metrics:
    truth = np.asarray(truth)
    try:
        a = auc(scores, truth)
    except SingleClass:
        a = None
    return Metrics(accuracy(pred, truth), f1_binary(pred, truth), a)
