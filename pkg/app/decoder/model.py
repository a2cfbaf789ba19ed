from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from app.decoder.layers import DecoderLayer, LayerContext, RoleRoutes
from app.decoder.positional import E3DEncoder
from app.errors import ContractViolation
from app.heads import (
    DetHead,
    DetPrediction,
    LaneHead,
    LanePrediction,
    PlanHead,
    PlanPrediction,
    det_decode,
    lane_decode,
    plan_decode,
)
from app.models import COMMANDS, DecoderConfig, ForwardMode, Segment, WorldConfig
from app.tokens import (
    BOS,
    EGO_STATUS_DIM,
    EOS,
    PAD,
    SequenceBatch,
    SequenceLayout,
    build_backbone_mask,
    build_group_mask,
)

log = logging.getLogger(__name__)

INIT_STD = 0.02


@dataclass(frozen=True)
class ForwardTrace:
    mode: ForwardMode
    det_states: list[torch.Tensor]  # per mixed layer, (B, n_det, d)
    lane_states: list[torch.Tensor]
    plan_states: list[torch.Tensor]  # (B, T, d)
    text_logits: torch.Tensor | None  # (B, n_text_max, V)
    layers_executed: int

    def query_states(self) -> list[torch.Tensor]:
        return [torch.cat(s, dim=1) for s in zip(self.det_states, self.lane_states, self.plan_states)]


@dataclass(frozen=True)
class Predictions:
    det: DetPrediction
    lane: LanePrediction
    plan: PlanPrediction


class DecoderModel(nn.Module):
    """Unified causal decoder: shallow mixed layers feed the task heads, deep layers feed text."""

    def __init__(
        self,
        cfg: DecoderConfig,
        layout: SequenceLayout,
        world: WorldConfig,
        vocab_size: int,
        seed: int = 0,
        group_attention: str = "joint",
    ) -> None:
        super().__init__()
        if layout.n_plan != world.horizon:
            raise ContractViolation("layout planning queries must match the world horizon")
        self.cfg = cfg
        self.layout = layout
        self.world = world
        self.vocab_size = vocab_size
        self.group_attention = group_attention
        d, E = cfg.d_model, world.world_extent

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.raster_embed = nn.Linear(world.grid_channels, d)
            self.token_embed = nn.Embedding(vocab_size, d)
            self.det_queries = nn.Parameter(torch.empty(layout.n_det, d))
            self.det_anchors = nn.Parameter(torch.empty(layout.n_det, 2))
            self.lane_queries = nn.Parameter(torch.empty(layout.n_lane, d))
            self.lane_anchors = nn.Parameter(torch.empty(layout.n_lane, 2))
            self.ego_embed = nn.Linear(EGO_STATUS_DIM, d)
            self.plan_queries = nn.Parameter(torch.empty(layout.n_plan, d))
            self.plan_anchor_embed = nn.Linear(2, d)
            self.e3d = E3DEncoder(cfg.d_head, cfg.e3d_scale, cfg.e3d_temperature, cfg.e3d_mode)
            self.layers = nn.ModuleList(DecoderLayer(cfg, mixed=i < cfg.n_mixed) for i in range(cfg.n_layers))
            self.final_norm = nn.RMSNorm(d)
            self.det_head = DetHead(d, world.n_classes)
            self.lane_head = LaneHead(d, world.lane_points)
            self.plan_head = PlanHead(d)
            self._init_weights(E)

        self.register_buffer("plan_anchors", torch.zeros(len(COMMANDS), world.horizon, 2))
        self.register_buffer(
            "backbone_mask", torch.as_tensor(build_backbone_mask(layout).allowed), persistent=False,
        )
        self.register_buffer(
            "group_mask",
            torch.as_tensor(build_group_mask(layout, per_group=group_attention == "per_group").allowed),
            persistent=False,
        )
        self.register_buffer("rotary_pos", torch.arange(layout.total_length), persistent=False)
        self.routes = RoleRoutes.from_layout(layout)

    def _init_weights(self, extent: float) -> None:
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.normal_(module.weight, std=INIT_STD)
                if module.bias is not None:
                    nn.init.zeros_(module.bias)
            elif isinstance(module, nn.Embedding):
                nn.init.normal_(module.weight, std=INIT_STD)
        for queries in (self.det_queries, self.lane_queries, self.plan_queries):
            nn.init.normal_(queries, std=INIT_STD)
        for anchors in (self.det_anchors, self.lane_anchors):
            nn.init.uniform_(anchors, -extent, extent)

    def set_plan_anchors(self, anchors: np.ndarray | torch.Tensor) -> None:
        with torch.no_grad():
            self.plan_anchors.copy_(torch.as_tensor(anchors, dtype=self.plan_anchors.dtype))

    # --- Forward ---

    def _embed(self, batch: SequenceBatch) -> tuple[torch.Tensor, torch.Tensor]:
        """Token states (B, L, d) and reference points (B, L - n_text_max, 2) of non-TEXT rows."""
        B, E = batch.size, self.world.world_extent
        states = {
            Segment.IMG: self.raster_embed(batch.img_features),
            Segment.DET_Q: self.det_queries.expand(B, -1, -1),
            Segment.LANE_Q: self.lane_queries.expand(B, -1, -1),
            Segment.EGO: self.ego_embed(batch.ego_status)[:, None],
            Segment.PLAN_Q: self.plan_queries + self.plan_anchor_embed(batch.plan_anchor / E),
            Segment.TEXT: self.token_embed(batch.text_ids),
        }
        refs = {
            Segment.IMG: batch.img_ref.expand(B, -1, -1),
            Segment.DET_Q: self.det_anchors.expand(B, -1, -1),
            Segment.LANE_Q: self.lane_anchors.expand(B, -1, -1),
            Segment.EGO: batch.ego_ref[:, None],
            Segment.PLAN_Q: batch.plan_ref,
        }
        order = self.layout.order
        return (
            torch.cat([states[s] for s in order], dim=1),
            torch.cat([refs[s] for s in order if s is not Segment.TEXT], dim=1),
        )

    def forward(
        self, batch: SequenceBatch, mode: ForwardMode = ForwardMode.FULL, need_text: bool | None = None,
    ) -> ForwardTrace:
        if need_text is None:
            need_text = mode is ForwardMode.FULL
        if need_text and mode is ForwardMode.TRUNCATED:
            raise ContractViolation("TRUNCATED forwards never produce text logits")
        if batch.layout != self.layout:
            raise ContractViolation("batch layout does not match the model layout")

        states, refs = self._embed(batch)
        emb = self.e3d(refs)
        n_text = self.layout.n_text_max
        ctx = LayerContext(
            backbone_mask=self.backbone_mask,
            group_mask=self.group_mask,
            rotary_pos=self.rotary_pos,
            e3d=torch.cat([emb, emb.new_zeros(emb.shape[0], n_text, emb.shape[2])], dim=1),
            routes=self.routes,
        )
        spans = self.layout.spans
        n_run = self.cfg.n_layers if mode is ForwardMode.FULL else self.cfg.n_mixed
        det, lane, plan = [], [], []
        for layer in self.layers[:n_run]:
            states = layer(states, ctx)
            if layer.mixed:
                det.append(states[:, spans[Segment.DET_Q]])
                lane.append(states[:, spans[Segment.LANE_Q]])
                plan.append(states[:, spans[Segment.PLAN_Q]])

        logits = None
        if need_text:
            text = self.final_norm(states[:, spans[Segment.TEXT]])
            logits = F.linear(text, self.token_embed.weight)
        return ForwardTrace(
            mode=mode, det_states=det, lane_states=lane, plan_states=plan,
            text_logits=logits, layers_executed=n_run,
        )

    def decode(self, trace: ForwardTrace, batch: SequenceBatch, layer: int = -1) -> Predictions:
        """Structured predictions read off one mixed layer (the last by default)."""
        E = self.world.world_extent
        return Predictions(
            det=det_decode(trace.det_states[layer], self.det_head, E),
            lane=lane_decode(trace.lane_states[layer], self.lane_head, E),
            plan=plan_decode(trace.plan_states[layer], self.plan_head, batch.plan_anchor),
        )

    def decode_all(self, trace: ForwardTrace, batch: SequenceBatch) -> list[Predictions]:
        return [self.decode(trace, batch, i) for i in range(len(trace.plan_states))]

    def text_logits(self, batch: SequenceBatch) -> torch.Tensor:
        return self(batch, ForwardMode.FULL).text_logits


@torch.no_grad()
def generate_text(model: nn.Module, batch: SequenceBatch, max_len: int) -> list[list[int]]:
    """Greedy decoding from BOS until EOS or ``max_len`` tokens; no KV cache.

    ``model`` is anything with a ``text_logits(batch)`` method.
    """
    n_text = batch.layout.n_text_max
    max_len = max(0, min(max_len, n_text - 1))
    ids = torch.full_like(batch.text_ids, PAD)
    ids[:, 0] = BOS
    out: list[list[int]] = [[] for _ in range(batch.size)]
    done = torch.zeros(batch.size, dtype=torch.bool)
    for t in range(max_len):
        logits = model.text_logits(batch.with_text(ids))
        nxt = logits[:, t].argmax(dim=-1).cpu()
        for b in range(batch.size):
            if done[b]:
                continue
            if int(nxt[b]) == EOS:
                done[b] = True
            else:
                out[b].append(int(nxt[b]))
        ids[:, t + 1] = torch.where(done, EOS, nxt)
        if done.all():
            break
    return out
