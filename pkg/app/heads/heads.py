from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

BOX_PARAMS = 6  # cx/E, cy/E, log w, log l, sin, cos


class _MLP(nn.Module):
    def __init__(self, d_model: int, d_out: int) -> None:
        super().__init__()
        self.norm = nn.RMSNorm(d_model)
        self.fc_in = nn.Linear(d_model, d_model)
        self.act = nn.GELU()
        self.fc_out = nn.Linear(d_model, d_out)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc_out(self.act(self.fc_in(self.norm(x))))


class DetHead(_MLP):
    def __init__(self, d_model: int, n_classes: int) -> None:
        super().__init__(d_model, n_classes + 1 + BOX_PARAMS)
        self.n_classes = n_classes


class LaneHead(_MLP):
    def __init__(self, d_model: int, lane_points: int) -> None:
        super().__init__(d_model, 2 * lane_points + 1)
        self.lane_points = lane_points


class PlanHead(_MLP):
    def __init__(self, d_model: int) -> None:
        super().__init__(d_model, 2)


@dataclass(frozen=True)
class DetPrediction:
    logits: torch.Tensor  # (B, Q, C + 1), last column is no-object
    params: torch.Tensor  # (B, Q, 6), normalized box parameters
    extent: float

    @property
    def centers(self) -> torch.Tensor:
        return self.params[..., :2] * self.extent

    @property
    def sizes(self) -> torch.Tensor:
        """(w, l) per query."""
        return self.params[..., 2:4].exp()

    @property
    def heading(self) -> torch.Tensor:
        unit = self.params[..., 4:6]
        unit = unit / unit.norm(dim=-1, keepdim=True).clamp_min(1e-12)
        return torch.atan2(unit[..., 0], unit[..., 1])

    def scores(self) -> tuple[torch.Tensor, torch.Tensor]:
        """Best real-class probability and its class per query."""
        probs = self.logits.softmax(dim=-1)[..., :-1]
        return probs.max(dim=-1)


@dataclass(frozen=True)
class LanePrediction:
    points: torch.Tensor  # (B, Q, K, 2), world units
    existence_logits: torch.Tensor  # (B, Q)


@dataclass(frozen=True)
class PlanPrediction:
    offsets: torch.Tensor  # (B, T, 2)
    anchor: torch.Tensor  # (B, T, 2), ego frame

    @property
    def waypoints(self) -> torch.Tensor:
        return self.anchor + self.offsets


def det_decode(states: torch.Tensor, head: DetHead, extent: float) -> DetPrediction:
    out = head(states)
    return DetPrediction(logits=out[..., :head.n_classes + 1], params=out[..., head.n_classes + 1:], extent=extent)


def lane_decode(states: torch.Tensor, head: LaneHead, extent: float) -> LanePrediction:
    out = head(states)
    K = head.lane_points
    points = out[..., :2 * K].unflatten(-1, (K, 2)) * extent
    return LanePrediction(points=points, existence_logits=out[..., 2 * K])


def plan_decode(states: torch.Tensor, head: PlanHead, anchor: torch.Tensor) -> PlanPrediction:
    return PlanPrediction(offsets=head(states), anchor=anchor)
