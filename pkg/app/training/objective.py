"""Per-stage training objectives.

    PRETRAIN_PERC_LANG:  lambda_perc * perc + text
    PLAN_ADAPT:          lambda_plan * plan + text
    JOINT:               lambda_perc * perc + lambda_plan * plan + text
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import torch

from app.decoder import DecoderModel
from app.errors import ContractViolation
from app.heads import SceneTargets, detection_loss, lane_loss, lm_loss, planning_loss
from app.models import ForwardMode, LossConfig, StageName
from app.tokens import SequenceBatch

STAGE_COMPONENTS: dict[StageName, tuple[str, ...]] = {
    StageName.PRETRAIN_PERC_LANG: ("perc",),
    StageName.PLAN_ADAPT: ("plan",),
    StageName.JOINT: ("perc", "plan"),
}


def required_components(stage: StageName, use_text: bool = True) -> tuple[str, ...]:
    return STAGE_COMPONENTS[stage] + (("text",) if use_text else ())


def total_loss(
    stage: StageName,
    components: Mapping[str, float | torch.Tensor],
    lambda_perc: float = 1.0,
    lambda_plan: float = 1.0,
    use_text: bool = True,
) -> float | torch.Tensor:
    """Weighted sum of exactly the components ``stage`` uses; extra or missing keys raise."""
    expected = set(required_components(stage, use_text))
    if set(components) != expected:
        missing = sorted(expected - set(components))
        extra = sorted(set(components) - expected)
        raise ContractViolation(f"{stage} loss needs components {sorted(expected)}; missing {missing}, unexpected {extra}")
    total = 0.0
    if "perc" in expected:
        total = total + lambda_perc * components["perc"]
    if "plan" in expected:
        total = total + lambda_plan * components["plan"]
    if use_text:
        total = total + components["text"]
    return total


@dataclass(frozen=True)
class StepLosses:
    components: dict[str, torch.Tensor]
    details: dict[str, torch.Tensor]  # det / lane / plan breakdowns for logging

    def floats(self) -> dict[str, float]:
        return {k: float(v.detach()) for k, v in self.components.items()}


def compute_components(
    model: DecoderModel,
    batch: SequenceBatch,
    targets: SceneTargets,
    stage: StageName,
    loss_cfg: LossConfig = LossConfig(),
    use_text: bool = True,
) -> StepLosses:
    mode = ForwardMode.FULL if use_text else ForwardMode.TRUNCATED
    trace = model(batch, mode, need_text=use_text)
    preds = model.decode_all(trace, batch)
    wanted = STAGE_COMPONENTS[stage]
    components: dict[str, torch.Tensor] = {}
    details: dict[str, torch.Tensor] = {}

    if "perc" in wanted:
        layout = model.layout
        if not layout.n_det and not layout.n_lane:
            raise ContractViolation(f"{stage} needs detection or lane queries")
        perc = []
        if layout.n_det:
            details["det"] = detection_loss([p.det for p in preds], targets.classes, targets.boxes, loss_cfg).total
            perc.append(details["det"])
        if layout.n_lane:
            details["lane"] = lane_loss([p.lane for p in preds], targets.lanes).total
            perc.append(details["lane"])
        components["perc"] = torch.stack(perc).sum()
    if "plan" in wanted:
        components["plan"] = planning_loss([p.plan for p in preds], targets.trajectory).total
    if use_text:
        components["text"] = lm_loss(trace.text_logits, batch.text_ids)
    return StepLosses(components=components, details=details)
