"""Rule-based oracle planner that produces the ground-truth trajectories.

Rule: head along the nearest lane, bend with a fixed curvature per command,
and decelerate linearly when an object sits in the lookahead corridor so the
ego stops short of it. Everything is expressed in the ego frame (left = +y).
"""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from app.models import Command, WorldConfig
from app.scene.geometry import point_polyline_distance, wrap_half_turn
from app.scene.types import Box, EgoState, Lane, SceneSample


def oracle_plan(scene: SceneSample, cfg: WorldConfig) -> list[tuple[float, float]]:
    waypoints, _ = plan_trajectory(scene.ego, scene.objects, scene.lanes, cfg)
    return [(float(x), float(y)) for x, y in waypoints]


def plan_trajectory(
    ego: EgoState, objects: Sequence[Box], lanes: Sequence[Lane], cfg: WorldConfig,
) -> tuple[np.ndarray, bool]:
    """Return (horizon x 2 ego-frame waypoints, whether the plan slows down)."""
    T, dt, v = cfg.horizon, cfg.dt, ego.speed
    steps = np.arange(1, T + 1, dtype=float)
    free = _free_distance(ego, objects, cfg)
    if free is None:
        arc = v * dt * steps
        slowed = False
    else:
        a = min(v * dt / T, 2 * max(free, 0.0) / (T * (T + 1)))
        arc = np.cumsum(a * (T - steps + 1))
        slowed = True
    kappa = {
        Command.LEFT: cfg.turn_curvature,
        Command.STRAIGHT: 0.0,
        Command.RIGHT: -cfg.turn_curvature,
    }[ego.command]
    return _arc_points(arc, _lane_heading(ego, lanes), kappa), slowed


def _lane_heading(ego: EgoState, lanes: Sequence[Lane]) -> float:
    """Heading of the nearest lane relative to the ego; 0 without lanes."""
    if not lanes:
        return 0.0
    here = ego.position[None, :]
    polylines = [np.asarray(lane, dtype=float) for lane in lanes]
    nearest = min(polylines, key=lambda p: float(point_polyline_distance(here, p)[0]))
    seg = int(np.argmin([
        point_polyline_distance(here, nearest[i:i + 2])[0] for i in range(len(nearest) - 1)
    ]))
    d = nearest[seg + 1] - nearest[seg]
    return wrap_half_turn(float(np.arctan2(d[1], d[0])) - ego.heading)


def _free_distance(ego: EgoState, objects: Sequence[Box], cfg: WorldConfig) -> float | None:
    """Free travel distance to the closest object in the corridor, None if clear."""
    if not objects:
        return None
    centers = ego.to_ego([(o.x, o.y) for o in objects])
    reach = ego.speed * cfg.horizon * cfg.dt + cfg.ego_radius + cfg.safety_margin
    free = None
    for obj, (ox, oy) in zip(objects, centers):
        r = obj.radius
        if 0.0 < ox <= reach + r and abs(oy) <= cfg.corridor_half_width + r:
            gap = ox - r - cfg.ego_radius - cfg.safety_margin
            free = gap if free is None else min(free, gap)
    return free


def _arc_points(arc: np.ndarray, phi: float, kappa: float) -> np.ndarray:
    if kappa == 0.0:
        return np.stack([arc * np.cos(phi), arc * np.sin(phi)], axis=-1)
    x = (np.sin(phi + kappa * arc) - np.sin(phi)) / kappa
    y = (np.cos(phi) - np.cos(phi + kappa * arc)) / kappa
    return np.stack([x, y], axis=-1)
