"""Decoder layer building blocks.

A mixed layer runs norm -> shared causal attention -> norm -> group attention
over the perception queries -> norm -> role-routed FFN. A deep layer is a
plain pre-norm causal block. Query-role rows drop the residual around the
shared attention in every layer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from app.decoder.positional import rotary_apply
from app.errors import ContractViolation
from app.models import DecoderConfig, Segment
from app.tokens import MaskSpec, SequenceLayout

QUERY_ROLES = frozenset({Segment.DET_Q, Segment.LANE_Q, Segment.EGO, Segment.PLAN_Q})
TASK_FFNS = ("det", "lane", "plan")


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, rotary_base: float = 10000.0) -> None:
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.rotary_base = rotary_base
        self.w_q = nn.Linear(d_model, d_model, bias=False)
        self.w_k = nn.Linear(d_model, d_model, bias=False)
        self.w_v = nn.Linear(d_model, d_model, bias=False)
        self.w_o = nn.Linear(d_model, d_model, bias=False)

    def _heads(self, x: torch.Tensor) -> torch.Tensor:
        B, L, _ = x.shape
        return x.view(B, L, self.n_heads, self.d_head).transpose(1, 2)

    def forward(
        self,
        x: torch.Tensor,
        allowed: torch.Tensor,
        rotary_pos: torch.Tensor | None = None,
        e3d: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """``allowed`` is an (L, L) boolean mask; ``e3d`` is (B, L, d_head), added to Q and K."""
        B, L, D = x.shape
        q, k, v = self._heads(self.w_q(x)), self._heads(self.w_k(x)), self._heads(self.w_v(x))
        if rotary_pos is not None:
            q = rotary_apply(q, rotary_pos, self.rotary_base)
            k = rotary_apply(k, rotary_pos, self.rotary_base)
        if e3d is not None:
            q = q + e3d.unsqueeze(1)
            k = k + e3d.unsqueeze(1)
        out = F.scaled_dot_product_attention(q, k, v, attn_mask=allowed)
        return self.w_o(out.transpose(1, 2).reshape(B, L, D))


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ffn: int) -> None:
        super().__init__()
        self.fc_in = nn.Linear(d_model, d_ffn)
        self.fc_out = nn.Linear(d_ffn, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc_out(F.gelu(self.fc_in(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: DecoderConfig, mixed: bool) -> None:
        super().__init__()
        self.mixed = mixed
        self.attn_norm = nn.RMSNorm(cfg.d_model)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.rotary_base)
        self.ffn_norm = nn.RMSNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ffn)
        if mixed:
            self.group_norm = nn.RMSNorm(cfg.d_model)
            self.group_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.rotary_base)
            self.task_ffns = nn.ModuleDict({name: FeedForward(cfg.d_model, cfg.d_ffn) for name in TASK_FFNS})

    def forward(self, states: torch.Tensor, ctx: LayerContext) -> torch.Tensor:
        states = backbone_attention(
            states, ctx.backbone_mask, ctx.rotary_pos, ctx.e3d, self, ctx.routes.query_rows,
        )
        if self.mixed:
            states = group_self_attention(states, ctx.group_mask, self, e3d=ctx.e3d)
        return ffn_dispatch(states, ctx.routes, self)


@dataclass(frozen=True)
class RoleRoutes:
    """Row indices per FFN route plus the residual-free query rows."""

    query_rows: torch.Tensor  # (L,) bool
    text: torch.Tensor  # IMG and TEXT rows
    det: torch.Tensor
    lane: torch.Tensor
    plan: torch.Tensor  # EGO and PLAN_Q rows

    @classmethod
    def from_layout(cls, layout: SequenceLayout, device: torch.device | None = None) -> RoleRoutes:
        roles = layout.roles

        def rows(*segments: Segment) -> torch.Tensor:
            idx = [i for i, r in enumerate(roles) if r in segments]
            return torch.as_tensor(idx, dtype=torch.long, device=device)

        return cls(
            query_rows=torch.as_tensor([r in QUERY_ROLES for r in roles], device=device),
            text=rows(Segment.IMG, Segment.TEXT),
            det=rows(Segment.DET_Q),
            lane=rows(Segment.LANE_Q),
            plan=rows(Segment.EGO, Segment.PLAN_Q),
        )

    @classmethod
    def plain(cls, length: int) -> RoleRoutes:
        """Routes for a sequence without query tokens."""
        empty = torch.zeros(0, dtype=torch.long)
        return cls(
            query_rows=torch.zeros(length, dtype=torch.bool),
            text=torch.arange(length),
            det=empty,
            lane=empty,
            plan=empty,
        )


@dataclass(frozen=True)
class LayerContext:
    backbone_mask: torch.Tensor  # (L, L) bool
    group_mask: torch.Tensor  # (L, L) bool
    rotary_pos: torch.Tensor  # (L,)
    e3d: torch.Tensor | None  # (B, L, d_head), zero on TEXT rows
    routes: RoleRoutes


def as_mask_tensor(mask: MaskSpec | torch.Tensor | np.ndarray, device: torch.device | None = None) -> torch.Tensor:
    allowed = mask.allowed if isinstance(mask, MaskSpec) else mask
    return torch.as_tensor(allowed, dtype=torch.bool, device=device)


def backbone_attention(
    states: torch.Tensor,
    mask: MaskSpec | torch.Tensor,
    rotary_pos: torch.Tensor,
    e3d: torch.Tensor | None,
    layer: DecoderLayer,
    query_rows: torch.Tensor,
    normalize: bool = True,
) -> torch.Tensor:
    L = states.shape[1]
    allowed = as_mask_tensor(mask, states.device)
    if allowed.shape != (L, L):
        raise ContractViolation(f"mask of shape {tuple(allowed.shape)} does not fit {L} tokens")
    x = layer.attn_norm(states) if normalize else states
    out = layer.attn(x, allowed, rotary_pos, e3d)
    return torch.where(query_rows.to(states.device)[:, None], out, states + out)


def group_self_attention(
    states: torch.Tensor,
    group_mask: MaskSpec | torch.Tensor,
    layer: DecoderLayer,
    e3d: torch.Tensor | None = None,
    normalize: bool = True,
) -> torch.Tensor:
    """Bidirectional attention among the rows the group mask covers; residual kept."""
    if not layer.mixed:
        raise ContractViolation("group self-attention only exists in mixed layers")
    allowed = as_mask_tensor(group_mask, states.device)
    rows = allowed.any(dim=1).nonzero().squeeze(1)
    if rows.numel() == 0:
        return states
    block = allowed[rows][:, rows]
    group = states[:, rows]
    x = layer.group_norm(group) if normalize else group
    out = layer.group_attn(x, block, None, None if e3d is None else e3d[:, rows])
    return states.index_copy(1, rows, group + out)


def ffn_dispatch(
    states: torch.Tensor, routes: RoleRoutes, layer: DecoderLayer, normalize: bool = True,
) -> torch.Tensor:
    x = layer.ffn_norm(states) if normalize else states
    if not layer.mixed:
        return states + layer.ffn(x)
    delta = torch.zeros_like(states)
    for rows, ffn in (
        (routes.text, layer.ffn),
        (routes.det, layer.task_ffns["det"]),
        (routes.lane, layer.task_ffns["lane"]),
        (routes.plan, layer.task_ffns["plan"]),
    ):
        if rows.numel():
            rows = rows.to(states.device)
            delta = delta.index_copy(1, rows, ffn(x[:, rows]))
    return states + delta
