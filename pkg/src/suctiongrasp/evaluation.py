"""Threshold sweeps over robustness scores: precision, recall, attempt and success rates."""
from __future__ import annotations

import csv

import numpy as np

COLUMNS = ("tau", "precision", "recall", "attempt_rate", "success_rate")


def pr_series(scores, labels) -> np.ndarray:
    """One row per distinct score, thresholds descending.

    A grasp is attempted when its score is at least ``tau``. Success rate is
    the fraction of attempted grasps that are positive, so it coincides with
    precision; attempt rate is the fraction of all cases attempted.
    """
    s = np.asarray(scores, float)
    y = np.asarray(labels).astype(bool)
    if s.size == 0:
        raise ValueError("no scores given")
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    attempted = np.arange(1, len(s) + 1)
    # last index of each distinct score in the sorted order
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    positives = max(int(y.sum()), 1)
    precision = tp[last] / attempted[last]
    recall = tp[last] / positives if y.any() else np.zeros(len(last))
    attempt = attempted[last] / len(s)
    return np.c_[s[last], precision, recall, attempt, precision]


def average_precision(scores, labels) -> float:
    """Trapezoidal area under the precision-recall curve, starting at recall 0."""
    rows = pr_series(scores, labels)
    recall = np.r_[0.0, rows[:, 2]]
    precision = np.r_[rows[0, 1], rows[:, 1]]
    return float(np.sum(np.diff(recall) * (precision[1:] + precision[:-1]) / 2.0))


def write_series(rows: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([f"{x:.10g}" for x in r])
