"""Open-loop planning metrics: L2 displacement and disc-vs-box collision rate."""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from app.errors import ConfigError, ContractViolation
from app.models import PlanMetrics
from app.scene import Box, EgoState
from app.scene.geometry import disc_hits_box


def _as_batch(waypoints) -> np.ndarray:
    arr = np.asarray(waypoints, dtype=float)
    return arr[None] if arr.ndim == 2 else arr


def l2_error(pred, gt, horizon_indices: Sequence[int]) -> PlanMetrics:
    """Euclidean error at each listed 0-based waypoint index, averaged over samples."""
    p, g = _as_batch(pred), _as_batch(gt)
    if p.shape != g.shape:
        raise ContractViolation(f"prediction shape {p.shape} does not match ground truth {g.shape}")
    horizons = [int(h) for h in horizon_indices]
    if not horizons:
        raise ContractViolation("no horizons to evaluate")
    if any(not 0 <= h < p.shape[1] for h in horizons):
        raise ContractViolation(f"horizon indices {horizons} outside 0..{p.shape[1] - 1}")
    dist = np.linalg.norm(p - g, axis=-1)  # (N, T)
    per_horizon = [float(dist[:, h].mean()) for h in horizons]
    return PlanMetrics(horizons=horizons, l2_per_horizon=per_horizon, l2_avg=float(np.mean(per_horizon)))


def collision_flags(waypoints: np.ndarray, objects: Sequence[Box], ego_radius: float) -> np.ndarray:
    """Per waypoint (world frame), whether the ego disc touches any box."""
    pts = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    hits = np.zeros(len(pts), dtype=bool)
    for box in objects:
        hits |= disc_hits_box(pts, ego_radius, box)
    return hits


def collision_rate(
    trajectories,
    objects: Sequence[Sequence[Box]],
    ego_radius: float,
    horizons: Sequence[int] | None = None,
    egos: Sequence[EgoState] | None = None,
) -> tuple[list[float], float]:
    """Fraction of samples colliding at each horizon index.

    Trajectories are in the world frame unless ``egos`` is given, in which
    case they are ego-frame and transformed per sample.
    """
    if ego_radius <= 0:
        raise ConfigError("ego_radius must be positive")
    trajs = _as_batch(trajectories)
    if len(objects) != len(trajs):
        raise ContractViolation("one object list per trajectory is required")
    if horizons is None:
        horizons = range(trajs.shape[1])
    flags = np.zeros((len(trajs), trajs.shape[1]), dtype=bool)
    for i, (traj, boxes) in enumerate(zip(trajs, objects)):
        world = traj if egos is None else egos[i].to_world(traj)
        flags[i] = collision_flags(world, boxes, ego_radius)
    per_horizon = [float(flags[:, h].mean()) for h in horizons]
    return per_horizon, float(np.mean(per_horizon)) if per_horizon else 0.0


def plan_metrics(
    pred,
    gt,
    objects: Sequence[Sequence[Box]],
    egos: Sequence[EgoState],
    horizon_indices: Sequence[int],
    ego_radius: float,
) -> PlanMetrics:
    l2 = l2_error(pred, gt, horizon_indices)
    per_horizon, avg = collision_rate(pred, objects, ego_radius, horizon_indices, egos)
    return l2.model_copy(update={"collision_per_horizon": per_horizon, "collision_avg": avg})
