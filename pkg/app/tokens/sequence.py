"""The unified token sequence: layout, per-token inputs and attention masks.

Positions follow the configured segment order. Every non-TEXT token carries a
2D world reference point; DET_Q and LANE_Q points come from learnable anchors
owned by the decoder, so here they only record which anchor they use.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from app.errors import CaptionOverflowError, ConfigError, ContractViolation
from app.models import COMMANDS, LayoutConfig, Segment, WorldConfig, check_segment_order
from app.scene import EgoState, GridFeatures, SceneSample, oracle_plan, rasterize
from app.tokens.vocab import PAD, Vocab, encode_text

log = logging.getLogger(__name__)

EGO_STATUS_DIM = 5 + len(COMMANDS)


@dataclass(frozen=True)
class SequenceLayout:
    order: tuple[Segment, ...]
    n_img: int
    n_det: int
    n_lane: int
    n_plan: int
    n_text_max: int

    def __post_init__(self) -> None:
        try:
            check_segment_order(tuple(self.order))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.n_img < 1 or self.n_plan < 1:
            raise ConfigError("a layout needs image tokens and planning queries")
        if self.n_det < 0 or self.n_lane < 0:
            raise ConfigError("query counts must be non-negative")
        if self.n_text_max < 2:
            raise ConfigError("n_text_max must leave room for BOS and EOS")

    @classmethod
    def from_config(cls, layout: LayoutConfig, world: WorldConfig) -> SequenceLayout:
        return cls(
            order=layout.order,
            n_img=world.n_cells,
            n_det=layout.n_det,
            n_lane=layout.n_lane,
            n_plan=world.horizon,
            n_text_max=layout.n_text_max,
        )

    def count(self, segment: Segment) -> int:
        return {
            Segment.IMG: self.n_img,
            Segment.DET_Q: self.n_det,
            Segment.LANE_Q: self.n_lane,
            Segment.EGO: 1,
            Segment.PLAN_Q: self.n_plan,
            Segment.TEXT: self.n_text_max,
        }[segment]

    @cached_property
    def spans(self) -> dict[Segment, slice]:
        spans, start = {}, 0
        for segment in self.order:
            spans[segment] = slice(start, start + self.count(segment))
            start += self.count(segment)
        return spans

    @property
    def total_length(self) -> int:
        return sum(self.count(s) for s in self.order)

    @cached_property
    def roles(self) -> tuple[Segment, ...]:
        return tuple(s for s in self.order for _ in range(self.count(s)))

    def positions(self, segment: Segment) -> np.ndarray:
        span = self.spans[segment]
        return np.arange(span.start, span.stop)

    @property
    def text_start(self) -> int:
        return self.spans[Segment.TEXT].start


@dataclass(frozen=True)
class TokenSequence:
    layout: SequenceLayout
    roles: tuple[Segment, ...]
    rotary_pos: np.ndarray  # (L,)
    ref_points: np.ndarray  # (L, 2), NaN on TEXT, zeros on DET_Q/LANE_Q (see anchor_index)
    anchor_index: np.ndarray  # (L,), index into the learnable anchors, -1 elsewhere
    text_ids: np.ndarray  # (n_text_max,)
    img_features: np.ndarray  # (n_img, C)
    ego_status: np.ndarray  # (EGO_STATUS_DIM,)
    command: int
    plan_anchor: np.ndarray  # (T, 2), ego frame

    @property
    def length(self) -> int:
        return len(self.roles)

    @property
    def has_ref(self) -> np.ndarray:
        return np.array([r is not Segment.TEXT for r in self.roles])


@dataclass(frozen=True)
class MaskSpec:
    allowed: np.ndarray  # (L, L) bool, allowed[i, j]: token i may attend to token j

    @property
    def length(self) -> int:
        return self.allowed.shape[0]

    @property
    def n_allowed(self) -> int:
        return int(self.allowed.sum())


def ego_status_vector(ego: EgoState) -> np.ndarray:
    command = np.zeros(len(COMMANDS))
    command[COMMANDS.index(ego.command)] = 1.0
    kinematics = [ego.speed, ego.acceleration, ego.yaw_rate, np.cos(ego.heading), np.sin(ego.heading)]
    return np.concatenate([kinematics, command])


def assemble_sequence(
    grid: GridFeatures,
    layout: SequenceLayout,
    scene: SceneSample,
    caption_ids: Sequence[int],
    anchors: np.ndarray,
) -> TokenSequence:
    """Build Z for one scene; ``anchors`` holds one (T, 2) trajectory per command."""
    if len(caption_ids) > layout.n_text_max:
        raise CaptionOverflowError(
            f"caption of {len(caption_ids)} tokens exceeds n_text_max={layout.n_text_max}"
        )
    if anchors.shape != (len(COMMANDS), layout.n_plan, 2):
        raise ContractViolation(
            f"anchors must have shape {(len(COMMANDS), layout.n_plan, 2)}, got {anchors.shape}"
        )
    features = grid.cell_features
    if features.shape[0] != layout.n_img:
        raise ContractViolation(f"grid has {features.shape[0]} cells, layout expects {layout.n_img}")

    L = layout.total_length
    spans = layout.spans
    ref = np.zeros((L, 2))
    anchor_index = np.full(L, -1, dtype=np.int64)
    command = COMMANDS.index(scene.ego.command)
    plan_anchor = np.array(anchors[command], dtype=float)

    ref[spans[Segment.IMG]] = grid.flat_centers
    anchor_index[spans[Segment.DET_Q]] = np.arange(layout.n_det)
    anchor_index[spans[Segment.LANE_Q]] = np.arange(layout.n_lane)
    ref[spans[Segment.EGO]] = scene.ego.position
    ref[spans[Segment.PLAN_Q]] = scene.ego.to_world(plan_anchor)
    ref[spans[Segment.TEXT]] = np.nan

    text = np.full(layout.n_text_max, PAD, dtype=np.int64)
    text[:len(caption_ids)] = caption_ids
    return TokenSequence(
        layout=layout,
        roles=layout.roles,
        rotary_pos=np.arange(L, dtype=np.int64),
        ref_points=ref,
        anchor_index=anchor_index,
        text_ids=text,
        img_features=np.array(features, dtype=float),
        ego_status=ego_status_vector(scene.ego),
        command=command,
        plan_anchor=plan_anchor,
    )


def build_backbone_mask(seq: TokenSequence | SequenceLayout) -> MaskSpec:
    L = _layout_of(seq).total_length
    return MaskSpec(allowed=np.tril(np.ones((L, L), dtype=bool)))


def build_group_mask(seq: TokenSequence | SequenceLayout, per_group: bool = False) -> MaskSpec:
    """Bidirectional block over the perception queries; everything else is excluded."""
    layout = _layout_of(seq)
    L = layout.total_length
    allowed = np.zeros((L, L), dtype=bool)
    det = layout.positions(Segment.DET_Q)
    lane = layout.positions(Segment.LANE_Q)
    if per_group:
        for group in (det, lane):
            allowed[np.ix_(group, group)] = True
    else:
        block = np.concatenate([det, lane])
        allowed[np.ix_(block, block)] = True
    return MaskSpec(allowed=allowed)


def compute_plan_anchors(scenes: Sequence[SceneSample], cfg: WorldConfig) -> np.ndarray:
    """Per-command mean ground-truth trajectory, shape (3, T, 2) in the ego frame.

    Commands absent from ``scenes`` fall back to the oracle plan of an empty
    scene at mid-range speed.
    """
    anchors = np.zeros((len(COMMANDS), cfg.horizon, 2))
    for i, command in enumerate(COMMANDS):
        trajectories = [s.trajectory_array() for s in scenes if s.ego.command is command]
        if trajectories:
            anchors[i] = np.mean(trajectories, axis=0)
        else:
            log.warning("No %s scenes to average; using the empty-scene plan as anchor", command)
            ego = EgoState(0.0, 0.0, 0.0, float(np.mean(cfg.speed_range)), 0.0, 0.0, command)
            empty = SceneSample(objects=(), lanes=(), ego=ego, gt_trajectory=(), caption=(), seed=-1)
            anchors[i] = np.asarray(oracle_plan(empty, cfg))
    return anchors


def sequences_for(
    scenes: Sequence[SceneSample],
    world: WorldConfig,
    layout: SequenceLayout,
    vocab: Vocab,
    anchors: np.ndarray,
) -> list[TokenSequence]:
    return [
        assemble_sequence(rasterize(s, world), layout, s, encode_text(s.caption, vocab), anchors)
        for s in scenes
    ]


def _layout_of(seq: TokenSequence | SequenceLayout) -> SequenceLayout:
    return seq.layout if isinstance(seq, TokenSequence) else seq
