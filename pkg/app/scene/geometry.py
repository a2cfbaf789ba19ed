"""Planar geometry shared by the scene generator and the evaluation metrics.

All functions are vectorized over a leading point axis: ``points`` has shape (N, 2).
"""
from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from app.scene.types import Box


def rotate(points: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    x, y = points[..., 0], points[..., 1]
    return np.stack([c * x - s * y, s * x + c * y], axis=-1)


def to_box_frame(points: np.ndarray, box: Box) -> np.ndarray:
    dx = points[..., 0] - box.x
    dy = points[..., 1] - box.y
    c, s = np.cos(box.heading), np.sin(box.heading)
    return np.stack([dx * c + dy * s, -dx * s + dy * c], axis=-1)


def point_box_distance(points: np.ndarray, box: Box) -> np.ndarray:
    """Euclidean distance from each point to an oriented box (0 inside)."""
    local = to_box_frame(np.asarray(points, dtype=float), box)
    ex = np.maximum(np.abs(local[..., 0]) - box.l / 2, 0.0)
    ey = np.maximum(np.abs(local[..., 1]) - box.w / 2, 0.0)
    return np.hypot(ex, ey)


def points_in_box(points: np.ndarray, box: Box) -> np.ndarray:
    local = to_box_frame(points, box)
    return (np.abs(local[..., 0]) <= box.l / 2) & (np.abs(local[..., 1]) <= box.w / 2)


def disc_hits_box(centers: np.ndarray, radius: float, box: Box) -> np.ndarray:
    """Contact counts as a hit."""
    return point_box_distance(centers, box) <= radius


def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    ap = points - a
    if denom == 0.0:
        return np.hypot(ap[..., 0], ap[..., 1])
    t = np.clip((ap @ ab) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    diff = points - closest
    return np.hypot(diff[..., 0], diff[..., 1])


def point_polyline_distance(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    if len(polyline) == 1:
        diff = points - polyline[0]
        return np.hypot(diff[..., 0], diff[..., 1])
    dists = [
        point_segment_distance(points, polyline[i], polyline[i + 1])
        for i in range(len(polyline) - 1)
    ]
    return np.min(np.stack(dists), axis=0)


def wrap_half_turn(angle: float) -> float:
    """Fold an undirected heading into [-pi/2, pi/2)."""
    return float((angle + np.pi / 2) % np.pi - np.pi / 2)
