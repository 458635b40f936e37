"""Evaluation metrics: MPJPE (Protocol-1), MPJVE and MPJAccE.

Units follow the inputs: mm, mm/frame and mm/frame^2 for millimetre
positions. Only :func:`mpjpe_protocol1` aligns roots; the temporal metrics
work on raw positions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .motion import MotionSequence

__all__ = [
    "METRICS",
    "MetricReport",
    "mpjpe_protocol1",
    "velocity",
    "mpjve",
    "acceleration",
    "mpjacce",
    "evaluate_pair",
    "aggregate_reports",
    "action_average",
]

METRICS = ("mpjpe", "mpjve", "mpjacce")


def _positions(seq) -> np.ndarray:
    P = seq.positions if isinstance(seq, MotionSequence) else np.asarray(seq, dtype=np.float64)
    if P.ndim != 3 or P.shape[2] != 3:
        raise ValueError(f"expected (T, J, 3) positions, got {P.shape}")
    return P


def _pair(est, gt) -> tuple[np.ndarray, np.ndarray]:
    e, g = _positions(est), _positions(gt)
    if e.shape != g.shape:
        raise ValueError(f"shape mismatch: estimate {e.shape} vs ground truth {g.shape}")
    return e, g


def _mean_dist(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b, axis=-1).mean())


def mpjpe_protocol1(est, gt, root_index: int | None = None) -> float:
    """MPJPE after subtracting each sequence's own root joint per frame."""
    if root_index is None:
        root_index = next(
            (s.skeleton.root_index for s in (est, gt) if isinstance(s, MotionSequence)), 0
        )
    e, g = _pair(est, gt)
    r = slice(root_index, root_index + 1)
    return _mean_dist(e - e[:, r], g - g[:, r])


def velocity(seq) -> np.ndarray:
    """Forward difference ``P[t + 1] - P[t]``, shape ``(T - 1, J, 3)``."""
    P = _positions(seq)
    if P.shape[0] < 2:
        raise ValueError("sequence too short for velocity (needs T >= 2)")
    return P[1:] - P[:-1]


def acceleration(seq, printed_form: bool = False) -> np.ndarray:
    """Second difference ``P[t + 2] - 2 P[t + 1] + P[t]``, shape ``(T - 2, J, 3)``.

    ``printed_form=True`` returns ``P[t + 2] - 2 P[t + 1] - P[t]`` instead; it is
    kept only for comparison and is not a finite-difference acceleration.
    """
    P = _positions(seq)
    if P.shape[0] < 3:
        raise ValueError("sequence too short for acceleration (needs T >= 3)")
    sign = -1.0 if printed_form else 1.0
    return P[2:] - 2.0 * P[1:-1] + sign * P[:-2]


def mpjve(est, gt) -> float:
    e, g = _pair(est, gt)
    return _mean_dist(velocity(e), velocity(g))


def mpjacce(est, gt, printed_form: bool = False) -> float:
    e, g = _pair(est, gt)
    return _mean_dist(acceleration(e, printed_form), acceleration(g, printed_form))


def action_average(values: Iterable[float]) -> float:
    """Unweighted mean over actions (each action counts once)."""
    vals = list(values)
    if not vals:
        raise ValueError("no values to average")
    return math.fsum(vals) / len(vals)


@dataclass
class MetricReport:
    """Aggregated metrics. ``None`` marks a metric the sequence length forbids."""

    mpjpe: float
    mpjve: float | None = None
    mpjacce: float | None = None
    per_action: dict[str, dict[str, float | None]] = field(default_factory=dict)

    def get(self, metric: str) -> float | None:
        return getattr(self, metric)

    def to_dict(self) -> dict:
        return {
            "mpjpe": self.mpjpe,
            "mpjve": self.mpjve,
            "mpjacce": self.mpjacce,
            "per_action": {k: dict(v) for k, v in self.per_action.items()},
        }


def evaluate_pair(est, gt, action_label: str = "all") -> MetricReport:
    e, g = _pair(est, gt)
    T = e.shape[0]
    root = next((s.skeleton.root_index for s in (est, gt) if isinstance(s, MotionSequence)), 0)
    values = {
        "mpjpe": mpjpe_protocol1(e, g, root),
        "mpjve": mpjve(e, g) if T >= 2 else None,
        "mpjacce": mpjacce(e, g) if T >= 3 else None,
    }
    return MetricReport(**values, per_action={action_label: dict(values)})


def _mean_or_none(vals: list[float | None]) -> float | None:
    present = [v for v in vals if v is not None]
    return action_average(present) if present else None


def aggregate_reports(reports: Iterable[MetricReport]) -> MetricReport:
    """Merge reports: pairs are averaged within an action, then actions are
    averaged without weighting to give the top-level (``Avg``) values."""
    buckets: dict[str, list[Mapping[str, float | None]]] = {}
    for rep in reports:
        for action, vals in rep.per_action.items():
            buckets.setdefault(action, []).append(vals)
    if not buckets:
        raise ValueError("no reports to aggregate")
    per_action = {
        action: {m: _mean_or_none([v[m] for v in rows]) for m in METRICS}
        for action, rows in buckets.items()
    }
    top = {m: _mean_or_none([per_action[a][m] for a in per_action]) for m in METRICS}
    return MetricReport(**top, per_action=per_action)
