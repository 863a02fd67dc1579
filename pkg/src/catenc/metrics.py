"""PR AUC (average precision), thresholded precision/recall/F1, and
percent deltas against a baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError

METRIC_NAMES = ("pr_auc", "precision", "recall", "f1")


@dataclass(frozen=True)
class MetricsReport:
    pr_auc: float
    precision: float
    recall: float
    f1: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def pr_auc(scores, y) -> float:
    """Average precision with tied scores grouped into a single cut point.

    Sum over distinct score values (descending) of the recall increment
    times the precision of predicting everything at or above that value.
    """
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y)
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        raise UndefinedMetricError("PR AUC is undefined without positive labels")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(y[order] == 1)
    # last index of each tie block
    ends = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    tp_cut = tp[ends]
    precision = tp_cut / (ends + 1)
    d_tp = np.diff(np.r_[0, tp_cut])
    return float(np.sum(d_tp * precision) / n_pos)


def _ratio(a: int, b: int) -> float:
    return a / b if b else 0.0


def prf1(scores, y, threshold: float = 0.5) -> MetricsReport:
    """Counts and metrics for the rule ``score >= threshold``; 0/0 is taken as 0.

    ``pr_auc`` is filled in when ``y`` has at least one positive, else ``nan``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y) == 1
    pred = scores >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    tn = int(len(y) - tp - fp - fn)
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    auc = pr_auc(scores, y) if tp + fn > 0 else math.nan
    return MetricsReport(auc, precision, recall, f1, float(threshold), tp, fp, tn, fn)


def percent_delta(candidate: float, baseline: float) -> float:
    if baseline == 0:
        raise UndefinedMetricError("percent delta against a zero baseline")
    return 100.0 * (candidate - baseline) / baseline


def format_percent(delta: float) -> str:
    """Nearest integer, halves away from zero, explicit sign: ``+10%``, ``-50%``, ``+0%``."""
    if delta is None or math.isnan(delta):
        return "n/a"
    r = int(math.floor(abs(delta) + 0.5))
    return f"+{r}%" if delta >= 0 or r == 0 else f"-{r}%"
