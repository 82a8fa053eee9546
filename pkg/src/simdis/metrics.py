"""Multi-label evaluation metrics.

Conventions: a label is predicted when its score is ``>= threshold``;
macro-F1 counts a class with no true and no predicted positives as F1 = 0;
precision@k breaks score ties toward the lower class index; AUC counts tied
positive/negative pairs as one half.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from simdis.errors import DomainError
from simdis.labels import LabelSet

log = logging.getLogger(__name__)


@dataclass
class Predictions:
    scores: np.ndarray
    truths: Sequence[LabelSet]
    threshold: float = 0.5

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2 or self.scores.shape[0] != len(self.truths):
            raise DomainError("scores must be num_samples x num_classes, one row per truth")
        if self.scores.shape[0] == 0:
            raise DomainError("need at least one sample")
        if not np.all(np.isfinite(self.scores)):
            raise DomainError("scores must be finite")
        if not 0 < self.threshold < 1:
            raise DomainError("threshold must lie in (0, 1)")
        if any(y.universe_size != self.scores.shape[1] for y in self.truths):
            raise DomainError("truth universe size does not match score columns")

    @property
    def truth_matrix(self) -> np.ndarray:
        return np.stack([y.indicator() for y in self.truths]).astype(bool)

    @property
    def predicted(self) -> np.ndarray:
        return self.scores >= self.threshold


def _counts(pred: Predictions):
    y, yhat = pred.truth_matrix, pred.predicted
    tp = (y & yhat).sum(axis=0)
    fp = (~y & yhat).sum(axis=0)
    fn = (y & ~yhat).sum(axis=0)
    return tp, fp, fn


def f1(pred: Predictions, averaging: str = "micro") -> float:
    tp, fp, fn = _counts(pred)
    if averaging == "micro":
        denom = 2 * tp.sum() + fp.sum() + fn.sum()
        return float(2 * tp.sum() / denom) if denom else 0.0
    if averaging == "macro":
        denom = 2 * tp + fp + fn
        per_class = np.divide(2 * tp, denom, out=np.zeros(tp.shape), where=denom > 0)
        return float(per_class.mean())
    raise ValueError(f"unknown averaging {averaging!r}")


def average_precision(scores: np.ndarray, truth: np.ndarray) -> float:
    """AP of one ranking; ties keep the original (sample index) order."""
    order = np.argsort(-scores, kind="stable")
    hits = truth[order].astype(np.float64)
    ranks = np.arange(1, len(hits) + 1)
    precision = np.cumsum(hits) / ranks
    return float((precision * hits).sum() / hits.sum())


def mean_average_precision(pred: Predictions) -> float:
    y = pred.truth_matrix
    classes = np.flatnonzero(y.any(axis=0))
    if classes.size == 0:
        raise DomainError("mAP undefined: no class has a positive sample")
    return float(np.mean([average_precision(pred.scores[:, c], y[:, c]) for c in classes]))


def precision_at_k(pred: Predictions, k: int) -> float:
    n, L = pred.scores.shape
    if not 1 <= k <= L:
        raise DomainError(f"k must lie in [1, {L}]")
    top = np.argsort(-pred.scores, axis=1, kind="stable")[:, :k]
    y = pred.truth_matrix
    hits = np.take_along_axis(y, top, axis=1).sum(axis=1)
    return float((hits / k).mean())


def _binary_auc(scores: np.ndarray, truth: np.ndarray) -> float:
    ranks = rankdata(scores)  # average ranks: ties count half
    n_pos = truth.sum()
    n_neg = truth.size - n_pos
    u = ranks[truth].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def degenerate_classes(pred: Predictions) -> list[int]:
    """Classes lacking either a positive or a negative sample."""
    y = pred.truth_matrix
    pos = y.sum(axis=0)
    return [int(c) for c in np.flatnonzero((pos == 0) | (pos == y.shape[0]))]


def auc(pred: Predictions, averaging: str = "macro") -> float:
    y = pred.truth_matrix
    if averaging == "micro":
        flat = y.ravel()
        if flat.all() or not flat.any():
            raise DomainError("micro-AUC needs both positive and negative cells")
        return _binary_auc(pred.scores.ravel(), flat)
    if averaging != "macro":
        raise ValueError(f"unknown averaging {averaging!r}")
    skip = set(degenerate_classes(pred))
    if skip:
        log.warning("macro-AUC excludes degenerate classes %s", sorted(skip))
    keep = [c for c in range(y.shape[1]) if c not in skip]
    if not keep:
        raise DomainError("macro-AUC undefined: every class is degenerate")
    return float(np.mean([_binary_auc(pred.scores[:, c], y[:, c]) for c in keep]))


def evaluate_all(pred: Predictions, ks: Sequence[int] = (5, 8)) -> dict:
    """Every metric as a flat dict keyed by metric name."""
    L = pred.scores.shape[1]
    out = {
        "micro_f1": f1(pred, "micro"),
        "macro_f1": f1(pred, "macro"),
        "mAP": mean_average_precision(pred),
        "micro_auc": auc(pred, "micro"),
        "macro_auc": auc(pred, "macro"),
        "auc_excluded_classes": degenerate_classes(pred),
    }
    for k in ks:
        if k <= L:
            out[f"p@{k}"] = precision_at_k(pred, k)
    return out


def to_json(metrics: dict) -> str:
    return json.dumps(metrics, sort_keys=True, indent=2) + "\n"


def to_csv(metrics: dict) -> str:
    keys = sorted(k for k, v in metrics.items() if not isinstance(v, list))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    w.writerow([repr(metrics[k]) for k in keys])
    return buf.getvalue()
