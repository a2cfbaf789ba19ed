from __future__ import annotations

import math

import numpy as np

from app.models import WorldConfig
from app.scene.geometry import point_polyline_distance, points_in_box
from app.scene.types import GridFeatures, SceneSample

OBJECT_CHANNEL = 0
LANE_CHANNEL = 1
HEADING_CHANNEL = 2
CLASS_CHANNEL_OFFSET = 3


def cell_centers(cfg: WorldConfig) -> np.ndarray:
    """World coordinates of every raster cell center, shape (H, W, 2)."""
    H, W = cfg.grid_hw
    E = cfg.world_extent
    xs = -E + (np.arange(W) + 0.5) * (2 * E / W)
    ys = -E + (np.arange(H) + 0.5) * (2 * E / H)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([gx, gy], axis=-1)


def rasterize(scene: SceneSample, cfg: WorldConfig) -> GridFeatures:
    H, W = cfg.grid_hw
    centers = cell_centers(cfg)
    flat = centers.reshape(-1, 2)
    raster = np.zeros((cfg.grid_channels, H * W))

    for box in scene.objects:
        inside = points_in_box(flat, box)
        raster[OBJECT_CHANNEL, inside] = 1.0
        class_channel = CLASS_CHANNEL_OFFSET + box.cls
        if class_channel < cfg.grid_channels:
            raster[class_channel, inside] = 1.0

    half_cell = 0.5 * min(2 * cfg.world_extent / W, 2 * cfg.world_extent / H)
    for lane in scene.lane_arrays():
        raster[LANE_CHANNEL, point_polyline_distance(flat, lane) <= half_cell] = 1.0

    raster[HEADING_CHANNEL, :] = (math.cos(scene.ego.heading) + 1) / 2
    return GridFeatures(raster=raster.reshape(cfg.grid_channels, H, W), cell_centers=centers)
