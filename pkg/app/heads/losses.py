"""Matched set losses with deep supervision, plus the language-modeling loss.

Every task loss is computed independently per mixed layer and aggregated by
the arithmetic mean over layers.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from app.errors import ContractViolation
from app.heads.heads import DetPrediction, LanePrediction, PlanPrediction
from app.heads.matching import hungarian_match
from app.models import LossConfig
from app.tokens import PAD


@dataclass(frozen=True)
class LossBreakdown:
    total: torch.Tensor
    per_layer: list[torch.Tensor]


def _deep_supervision(per_layer: list[torch.Tensor]) -> LossBreakdown:
    if not per_layer:
        raise ContractViolation("deep supervision needs at least one mixed layer of predictions")
    return LossBreakdown(total=torch.stack(per_layer).mean(), per_layer=per_layer)


def _pairs(cost: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    pairs = hungarian_match(cost)
    rows = torch.as_tensor([p for p, _ in pairs], dtype=torch.long, device=cost.device)
    cols = torch.as_tensor([g for _, g in pairs], dtype=torch.long, device=cost.device)
    return rows, cols


# --- Detection ---


def detection_loss(
    preds: Sequence[DetPrediction],
    classes: Sequence[torch.Tensor],
    boxes: Sequence[torch.Tensor],
    cfg: LossConfig = LossConfig(),
) -> LossBreakdown:
    return _deep_supervision([_detection_layer(p, classes, boxes, cfg) for p in preds])


def _detection_layer(
    pred: DetPrediction, classes: Sequence[torch.Tensor], boxes: Sequence[torch.Tensor], cfg: LossConfig,
) -> torch.Tensor:
    n_queries, no_object = pred.logits.shape[1], pred.logits.shape[2] - 1
    losses = []
    for logits, params, cls, gt in zip(pred.logits, pred.params, classes, boxes):
        cls = cls.to(logits.device)
        n = len(cls)
        if n > n_queries:
            raise ContractViolation(f"{n} objects but only {n_queries} detection queries")
        target = torch.full((n_queries,), no_object, dtype=torch.long, device=logits.device)
        weight = torch.full((n_queries,), cfg.no_object_weight, dtype=logits.dtype, device=logits.device)
        box_term = logits.new_zeros(())
        if n:
            l1 = (params[:, None, :] - gt.to(params)[None]).abs().mean(dim=-1)
            cost = -logits.log_softmax(dim=-1)[:, cls] + cfg.box_weight * l1
            rows, cols = _pairs(cost)
            target[rows] = cls[cols]
            weight[rows] = 1.0
            box_term = cfg.box_weight * l1[rows, cols].sum() / n
        ce = F.cross_entropy(logits, target, reduction="none")
        losses.append((weight * ce).sum() / weight.sum() + box_term)
    return torch.stack(losses).mean()


# --- Lanes ---


def canonicalize_lanes(lanes: torch.Tensor) -> torch.Tensor:
    """Orient (..., K, 2) polylines so the first point has the smaller x (then smaller y)."""
    first, last = lanes[..., 0, :], lanes[..., -1, :]
    flip = (first[..., 0] > last[..., 0]) | ((first[..., 0] == last[..., 0]) & (first[..., 1] > last[..., 1]))
    return torch.where(flip[..., None, None], lanes.flip(-2), lanes)


def lane_cost(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean per-point |dx| + |dy| between every canonical pred and gt polyline, (Q, m)."""
    p, g = canonicalize_lanes(pred), canonicalize_lanes(gt)
    return (p[:, None] - g[None]).abs().sum(dim=-1).mean(dim=-1)


def lane_loss(preds: Sequence[LanePrediction], lanes: Sequence[torch.Tensor]) -> LossBreakdown:
    return _deep_supervision([_lane_layer(p, lanes) for p in preds])


def _lane_layer(pred: LanePrediction, lanes: Sequence[torch.Tensor]) -> torch.Tensor:
    n_queries = pred.points.shape[1]
    losses = []
    for points, existence, gt in zip(pred.points, pred.existence_logits, lanes):
        m = len(gt)
        if m > n_queries:
            raise ContractViolation(f"{m} lanes but only {n_queries} lane queries")
        target = torch.zeros_like(existence)
        match_term = points.new_zeros(())
        if m:
            cost = lane_cost(points, gt.to(points))
            rows, cols = _pairs(cost)
            match_term = cost[rows, cols].mean()
            target[rows] = 1.0
        losses.append(match_term + F.binary_cross_entropy_with_logits(existence, target))
    return torch.stack(losses).mean()


# --- Planning and text ---


def planning_loss(preds: Sequence[PlanPrediction], trajectory: torch.Tensor) -> LossBreakdown:
    per_layer = []
    for pred in preds:
        if pred.waypoints.shape != trajectory.shape:
            raise ContractViolation(
                f"plan horizon mismatch: predicted {tuple(pred.waypoints.shape)}, "
                f"ground truth {tuple(trajectory.shape)}"
            )
        per_layer.append((pred.waypoints - trajectory.to(pred.waypoints)).abs().sum(dim=-1).mean())
    return _deep_supervision(per_layer)


def lm_loss(text_logits: torch.Tensor, text_ids: torch.Tensor) -> torch.Tensor:
    """Mean next-token cross-entropy over non-PAD targets."""
    targets = text_ids[:, 1:].to(text_logits.device)
    if not (targets != PAD).any():
        raise ContractViolation("every text target is padding")
    logits = text_logits[:, :-1]
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), ignore_index=PAD)
