"""Ranking metrics for uplift scores: AUUC, Qini and curve points.

Rows are ranked by score, highest first. Ties keep the original row order
(stable sort), so a prefix metric never depends on how the sort engine
breaks ties. Prefixes in which one group is still empty contribute a rate
(or Qini control term) of 0.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateGain, EmptyGroup

log = logging.getLogger(__name__)


class EvalRow(NamedTuple):
    score: float
    treated: bool
    outcome: int


def rows_to_arrays(rows: Sequence[EvalRow]):
    score = np.array([r.score for r in rows], dtype=np.float64)
    treated = np.array([r.treated for r in rows], dtype=bool)
    outcome = np.array([r.outcome for r in rows], dtype=np.float64)
    return score, treated, outcome


def _prefix_counts(score, treated, outcome):
    score = np.asarray(score, dtype=np.float64)
    treated = np.asarray(treated, dtype=bool)
    outcome = np.asarray(outcome, dtype=np.float64)
    if not (len(score) == len(treated) == len(outcome)):
        raise ValueError("score, treated and outcome must have equal length")
    if not np.all(np.isfinite(score)):
        raise ValueError("scores must be finite")
    if not treated.any() or treated.all():
        raise EmptyGroup("need at least one treated and one control row")
    order = np.argsort(-score, kind="stable")
    tr = treated[order]
    out = outcome[order]
    n_t = np.cumsum(tr)
    n_c = np.cumsum(~tr)
    y_t = np.cumsum(out * tr)
    y_c = np.cumsum(out * ~tr)
    return n_t, n_c, y_t, y_c


def _trapezoid_from_origin(x, y):
    x = np.concatenate([[0.0], x])
    y = np.concatenate([[0.0], y])
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def uplift_gain(score, treated, outcome) -> np.ndarray:
    """gain(m) = (Y_t(m)/N_t(m) - Y_c(m)/N_c(m)) * m for m = 1..N."""
    n_t, n_c, y_t, y_c = _prefix_counts(score, treated, outcome)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate_t = np.where(n_t > 0, y_t / np.maximum(n_t, 1), 0.0)
        rate_c = np.where(n_c > 0, y_c / np.maximum(n_c, 1), 0.0)
    m = np.arange(1, len(n_t) + 1)
    return (rate_t - rate_c) * m


def auuc(score, treated, outcome) -> float:
    """Area under the normalized cumulative uplift-gain curve.

    The curve runs from (0, 0) through (m/N, gain(m)/gain(N)); random
    ranking gives about 0.5. Raises :class:`DegenerateGain` when
    gain(N) <= 0.
    """
    gain = uplift_gain(score, treated, outcome)
    total = gain[-1]
    if not total > 0:
        raise DegenerateGain(f"terminal gain {total!r} is not positive")
    n = len(gain)
    x = np.arange(1, n + 1) / n
    return _trapezoid_from_origin(x, gain / total)


def qini_curve(score, treated, outcome) -> np.ndarray:
    """q(m) = Y_t(m) - Y_c(m) * N_t(m) / N_c(m) for m = 1..N."""
    n_t, n_c, y_t, y_c = _prefix_counts(score, treated, outcome)
    with np.errstate(divide="ignore", invalid="ignore"):
        ctrl = np.where(n_c > 0, y_c * n_t / np.maximum(n_c, 1), 0.0)
    return y_t - ctrl


def qini(score, treated, outcome) -> float:
    """Area between the Qini curve and the straight line to (N, q(N)),
    divided by N. Raises :class:`DegenerateGain` under the same condition
    as :func:`auuc`."""
    gain = uplift_gain(score, treated, outcome)
    if not gain[-1] > 0:
        raise DegenerateGain(f"terminal gain {gain[-1]!r} is not positive")
    q = qini_curve(score, treated, outcome)
    n = len(q)
    area = _trapezoid_from_origin(np.arange(1, n + 1, dtype=np.float64), q)
    return (area - q[-1] * n / 2.0) / n


@dataclass(frozen=True)
class UpliftCurve:
    x: np.ndarray
    gain: np.ndarray

    @property
    def terminal(self) -> float:
        return float(self.gain[-1])


def uplift_curve(score, treated, outcome) -> UpliftCurve:
    gain = uplift_gain(score, treated, outcome)
    n = len(gain)
    return UpliftCurve(np.arange(1, n + 1) / n, gain)


# ---------------------------------------------------------------------------
# multi-treatment reduction

TASKS = ("Y", "Z", "CVR")


@dataclass(frozen=True)
class TaskEval:
    """Per-treatment metrics; None marks a view whose gain is degenerate
    or that lacks one of the two groups. Means skip undefined entries."""

    task: str
    auuc_per_k: Tuple[Optional[float], ...]
    qini_per_k: Tuple[Optional[float], ...]

    @staticmethod
    def _mean(values) -> Optional[float]:
        defined = [v for v in values if v is not None]
        return float(np.mean(defined)) if defined else None

    @property
    def auuc(self) -> Optional[float]:
        return self._mean(self.auuc_per_k)

    @property
    def qini(self) -> Optional[float]:
        return self._mean(self.qini_per_k)

    def as_dict(self) -> Dict:
        return {"task": self.task, "auuc": self.auuc, "qini": self.qini,
                "auuc_per_treatment": list(self.auuc_per_k),
                "qini_per_treatment": list(self.qini_per_k)}


def binary_view(ds, scores, k: int, task: str):
    """(score, treated, outcome) for treatment k against control.

    Y ranks clicks on all rows; Z ranks conversions on all rows (CTCVR
    view); CVR ranks conversions on clicked rows only.
    """
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}")
    mask = (ds.t == 0) | (ds.t == k)
    if task == "CVR":
        mask &= ds.y == 1
    outcome = ds.y if task == "Y" else ds.z
    return scores[mask, k - 1], ds.t[mask] == k, outcome[mask]


def _task_scores(ite, task):
    if task == "Y":
        return ite.tau_y
    if task == "Z":
        return ite.tau_z
    return ite.tau_cvr


def per_treatment_eval(ds, ite, task: str = "Z") -> TaskEval:
    """AUUC and Qini for each treatment k vs control, plus their mean.

    ``ite`` needs ``tau_y``, ``tau_z`` and ``tau_cvr`` arrays of shape
    (N, K) aligned with ``ds``.
    """
    K = ds.schema.K
    scores = np.asarray(_task_scores(ite, task))
    if scores.shape != (ds.N, K):
        raise ValueError(f"expected scores of shape {(ds.N, K)}, got {scores.shape}")
    a, q = [], []
    for k in range(1, K + 1):
        view = binary_view(ds, scores, k, task)
        try:
            a.append(auuc(*view))
            q.append(qini(*view))
        except (DegenerateGain, EmptyGroup) as exc:
            log.warning("%s uplift for treatment %d undefined: %s", task, k, exc)
            a.append(None)
            q.append(None)
    return TaskEval(task, tuple(a), tuple(q))


def write_curves(path, ds, ite, tasks=("Z", "CVR")):
    """CSV of uplift-gain curve points for every (task, treatment)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task", "k", "x", "gain"])
        for task in tasks:
            scores = np.asarray(_task_scores(ite, task))
            for k in range(1, ds.schema.K + 1):
                try:
                    curve = uplift_curve(*binary_view(ds, scores, k, task))
                except EmptyGroup:
                    continue
                for x, g in zip(curve.x, curve.gain):
                    w.writerow([task, k, repr(float(x)), repr(float(g))])
