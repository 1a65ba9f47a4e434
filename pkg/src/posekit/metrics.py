"""Pose accuracy metrics: ADD, ADD-S, and per-object accuracy rollups.

ADD is the mean distance between model points transformed by the ground
truth pose and by the estimate. ADD-S replaces the paired distance with
the distance to the nearest estimated point, which makes it blind to
object symmetries. A pose counts as correct when its error is strictly
below one tenth of the object diameter. Units are millimeters
throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .geometry import Pose, transform_points

CORRECTNESS_FACTOR = 0.1

# nearest-neighbor search switches from exhaustive to a KD-tree above this
_ADDS_BRUTE_MAX = 5_000


def _model_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise ShapeMismatch(f"model points must be (N, 3), got {pts.shape}")
    return pts


def add(gt: Pose, pred: Pose, points) -> float:
    """Mean paired distance between the two transformed point sets."""
    pts = _model_points(points)
    a = transform_points(gt, pts)
    b = transform_points(pred, pts)
    return float(np.linalg.norm(a - b, axis=1).mean())


def add_s(gt: Pose, pred: Pose, points) -> float:
    """Mean nearest-neighbor distance from ground-truth-transformed points
    to the estimate-transformed set (symmetry-agnostic ADD)."""
    pts = _model_points(points)
    a = transform_points(gt, pts)
    b = transform_points(pred, pts)
    if len(pts) <= _ADDS_BRUTE_MAX:
        nearest = np.empty(len(a))
        chunk = max(1, (1 << 22) // max(len(b), 1))
        for i in range(0, len(a), chunk):
            d = np.linalg.norm(a[i:i + chunk, None, :] - b[None, :, :], axis=2)
            nearest[i:i + chunk] = d.min(axis=1)
        return float(nearest.mean())
    from scipy.spatial import cKDTree
    dist, _ = cKDTree(b).query(a)
    return float(np.asarray(dist).mean())


def pose_correct(error: float, diameter: float,
                 factor: float = CORRECTNESS_FACTOR) -> bool:
    """Strictly-below-threshold decision: error < factor * diameter."""
    if not diameter > 0:
        raise ValueError(f"diameter must be > 0, got {diameter}")
    return bool(error < factor * diameter)


@dataclass(frozen=True)
class EvalRecord:
    """One estimated pose scored against its ground truth."""

    object_id: str
    error: float       # add or add-s value, mm
    threshold: float   # factor * diameter, mm
    correct: bool
    metric: str = "add"


@dataclass(frozen=True)
class ObjectAccuracy:
    object_id: str
    n: int
    accuracy: float
    metric: str


@dataclass(frozen=True)
class EvalSummary:
    """Per-object accuracies plus their unweighted mean.

    The mean treats every object class equally regardless of how many
    samples each contributed.
    """

    per_object: tuple[ObjectAccuracy, ...]
    mean_accuracy: float


def evaluate(records: list[EvalRecord]) -> EvalSummary:
    if not records:
        raise ValueError("no records to evaluate")
    by_object: dict[str, list[EvalRecord]] = {}
    for rec in records:
        by_object.setdefault(rec.object_id, []).append(rec)
    rows = []
    for object_id in sorted(by_object):
        group = by_object[object_id]
        metrics = {rec.metric for rec in group}
        if len(metrics) != 1:
            raise ValueError(f"mixed metrics for {object_id!r}: {sorted(metrics)}")
        acc = float(np.mean([rec.correct for rec in group]))
        rows.append(ObjectAccuracy(object_id, len(group), acc, metrics.pop()))
    mean = float(np.mean([row.accuracy for row in rows]))
    return EvalSummary(tuple(rows), mean)
