from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import torch

from app.scene import Box, SceneSample


@dataclass(frozen=True)
class SceneTargets:
    """Supervision for a batch; object and lane counts vary per sample."""

    classes: list[torch.Tensor]  # (n_i,) long
    boxes: list[torch.Tensor]  # (n_i, 6) normalized box parameters
    lanes: list[torch.Tensor]  # (m_i, K, 2) world units
    trajectory: torch.Tensor  # (B, T, 2) ego frame

    def __len__(self) -> int:
        return len(self.classes)

    def select(self, index: Sequence[int] | torch.Tensor) -> SceneTargets:
        idx = [int(i) for i in index]
        return SceneTargets(
            classes=[self.classes[i] for i in idx],
            boxes=[self.boxes[i] for i in idx],
            lanes=[self.lanes[i] for i in idx],
            trajectory=self.trajectory[torch.as_tensor(idx, dtype=torch.long)],
        )

    def to(self, dtype: torch.dtype) -> SceneTargets:
        return SceneTargets(
            classes=self.classes,
            boxes=[b.to(dtype) for b in self.boxes],
            lanes=[lane.to(dtype) for lane in self.lanes],
            trajectory=self.trajectory.to(dtype),
        )


def box_params(box: Box, extent: float) -> list[float]:
    return [
        box.x / extent,
        box.y / extent,
        math.log(box.w),
        math.log(box.l),
        math.sin(box.heading),
        math.cos(box.heading),
    ]


def build_targets(
    scenes: Sequence[SceneSample], extent: float, lane_points: int, dtype: torch.dtype = torch.float32,
) -> SceneTargets:
    classes, boxes, lanes = [], [], []
    for scene in scenes:
        classes.append(torch.as_tensor([o.cls for o in scene.objects], dtype=torch.long))
        boxes.append(torch.as_tensor(
            np.reshape([box_params(o, extent) for o in scene.objects], (-1, 6)), dtype=dtype,
        ))
        arrays = scene.lane_arrays()
        lanes.append(torch.as_tensor(
            np.stack(arrays) if arrays else np.zeros((0, lane_points, 2)), dtype=dtype,
        ))
    trajectory = torch.as_tensor(np.stack([s.trajectory_array() for s in scenes]), dtype=dtype)
    return SceneTargets(classes=classes, boxes=boxes, lanes=lanes, trajectory=trajectory)
