"""Named parameter groups and the per-stage freeze policies."""
from __future__ import annotations

import hashlib
from collections.abc import Iterable

from torch import nn

from app.errors import ContractViolation
from app.models import PARAMETER_GROUPS, StageName

STAGE_TRAINABLE: dict[StageName, tuple[str, ...]] = {
    StageName.PRETRAIN_PERC_LANG: (
        "backbone_attn_mixed",
        "lora",
        "group_attn",
        "perception_ffn",
        "det_queries",
        "lane_queries",
        "det_head",
        "lane_head",
        "e3d",
    ),
    StageName.PLAN_ADAPT: ("backbone_attn_mixed", "lora", "plan_queries", "plan_ffn", "plan_head"),
    StageName.JOINT: PARAMETER_GROUPS,
}

PERCEPTION_EXCLUSIVE = ("group_attn", "perception_ffn", "det_queries", "lane_queries", "det_head", "lane_head")

_TOP_LEVEL = {
    "raster_embed": "raster_embed",
    "token_embed": "text_embed",
    "final_norm": "text_embed",
    "det_queries": "det_queries",
    "det_anchors": "det_queries",
    "lane_queries": "lane_queries",
    "lane_anchors": "lane_queries",
    "ego_embed": "plan_queries",
    "plan_queries": "plan_queries",
    "plan_anchor_embed": "plan_queries",
    "e3d": "e3d",
    "det_head": "det_head",
    "lane_head": "lane_head",
    "plan_head": "plan_head",
}


def parameter_group(name: str, n_mixed: int) -> str:
    parts = name.split(".")
    if "lora_a" in parts or "lora_b" in parts:
        return "lora"
    if parts[0] == "layers":
        index, block = int(parts[1]), parts[2]
        if block in ("attn", "attn_norm"):
            return "backbone_attn_mixed" if index < n_mixed else "backbone_attn_deep"
        if block in ("ffn", "ffn_norm"):
            return "text_ffn"
        if block in ("group_attn", "group_norm"):
            return "group_attn"
        if block == "task_ffns":
            return "plan_ffn" if parts[3] == "plan" else "perception_ffn"
    try:
        return _TOP_LEVEL[parts[0]]
    except KeyError:
        raise ContractViolation(f"parameter {name!r} belongs to no group") from None


def grouped_parameters(model: nn.Module, n_mixed: int) -> dict[str, list[tuple[str, nn.Parameter]]]:
    groups: dict[str, list[tuple[str, nn.Parameter]]] = {g: [] for g in PARAMETER_GROUPS}
    for name, param in model.named_parameters():
        groups[parameter_group(name, n_mixed)].append((name, param))
    return groups


def set_trainable(model: nn.Module, groups: Iterable[str], n_mixed: int) -> list[nn.Parameter]:
    """Freeze everything outside ``groups``; return the trainable parameters."""
    wanted = set(groups)
    trainable = []
    for name, param in model.named_parameters():
        train = parameter_group(name, n_mixed) in wanted
        param.requires_grad_(train)
        if train:
            trainable.append(param)
    return trainable


def group_digest(model: nn.Module, groups: Iterable[str], n_mixed: int) -> str:
    """sha256 over the raw bytes of every parameter in ``groups``, in name order."""
    wanted = set(groups)
    h = hashlib.sha256()
    for name, param in sorted(model.named_parameters(), key=lambda kv: kv[0]):
        if parameter_group(name, n_mixed) in wanted:
            h.update(name.encode())
            h.update(param.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()
