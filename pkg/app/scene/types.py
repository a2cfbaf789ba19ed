from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from app.models import Command
from app.scene.geometry import rotate


@dataclass(frozen=True, slots=True)
class Box:
    """Oriented object box: center, width (lateral), length (along heading)."""

    x: float
    y: float
    w: float
    l: float  # noqa: E741
    heading: float
    cls: int
    speed: float

    @property
    def radius(self) -> float:
        return float(np.hypot(self.w, self.l) / 2)


@dataclass(frozen=True, slots=True)
class EgoState:
    x: float
    y: float
    heading: float
    speed: float
    acceleration: float
    yaw_rate: float
    command: Command

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_world(self, points) -> np.ndarray:
        """Ego-frame points (left = +y) to world frame."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return rotate(pts, self.heading) + self.position

    def to_ego(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return rotate(pts - self.position, -self.heading)


Lane = tuple[tuple[float, float], ...]
Waypoints = tuple[tuple[float, float], ...]


@dataclass(frozen=True, slots=True)
class SceneSample:
    objects: tuple[Box, ...]
    lanes: tuple[Lane, ...]
    ego: EgoState
    gt_trajectory: Waypoints
    caption: tuple[str, ...]
    seed: int

    def lane_arrays(self) -> list[np.ndarray]:
        return [np.asarray(lane, dtype=float) for lane in self.lanes]

    def trajectory_array(self) -> np.ndarray:
        return np.asarray(self.gt_trajectory, dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class GridFeatures:
    raster: np.ndarray  # (C, H, W), row index grows with y
    cell_centers: np.ndarray  # (H, W, 2)

    @property
    def cell_features(self) -> np.ndarray:
        """Per-cell channel vectors in row-major order, shape (H*W, C)."""
        c = self.raster.shape[0]
        return self.raster.reshape(c, -1).T

    @property
    def flat_centers(self) -> np.ndarray:
        return self.cell_centers.reshape(-1, 2)
