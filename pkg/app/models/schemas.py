from __future__ import annotations

import math
from enum import StrEnum
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# --- Enumerations ---


class Command(StrEnum):
    LEFT = "LEFT"
    STRAIGHT = "STRAIGHT"
    RIGHT = "RIGHT"


COMMANDS: tuple[Command, ...] = (Command.LEFT, Command.STRAIGHT, Command.RIGHT)


class Segment(StrEnum):
    IMG = "IMG"
    DET_Q = "DET_Q"
    LANE_Q = "LANE_Q"
    EGO = "EGO"
    PLAN_Q = "PLAN_Q"
    TEXT = "TEXT"


DEFAULT_ORDER: tuple[Segment, ...] = (
    Segment.IMG, Segment.DET_Q, Segment.LANE_Q, Segment.EGO, Segment.PLAN_Q, Segment.TEXT,
)
LANE_FIRST_ORDER: tuple[Segment, ...] = (
    Segment.IMG, Segment.LANE_Q, Segment.DET_Q, Segment.EGO, Segment.PLAN_Q, Segment.TEXT,
)


class StageName(StrEnum):
    PRETRAIN_PERC_LANG = "PRETRAIN_PERC_LANG"
    PLAN_ADAPT = "PLAN_ADAPT"
    JOINT = "JOINT"


PIPELINE: tuple[StageName, ...] = (
    StageName.PRETRAIN_PERC_LANG, StageName.PLAN_ADAPT, StageName.JOINT,
)


class WeightSource(StrEnum):
    PRETRAINED = "PRETRAINED"
    RANDOM = "RANDOM"


class ForwardMode(StrEnum):
    FULL = "FULL"
    TRUNCATED = "TRUNCATED"


class E3DMode(StrEnum):
    SINUSOID = "sinusoid"
    LEARNED = "learned"


# Named parameter groups used by stage freeze policies.
PARAMETER_GROUPS: tuple[str, ...] = (
    "raster_embed",
    "text_embed",
    "backbone_attn_mixed",
    "backbone_attn_deep",
    "lora",
    "text_ffn",
    "group_attn",
    "perception_ffn",
    "plan_ffn",
    "det_queries",
    "lane_queries",
    "plan_queries",
    "e3d",
    "det_head",
    "lane_head",
    "plan_head",
)


# --- Module configuration ---


def check_segment_order(order: tuple[Segment, ...]) -> None:
    """Raise ValueError unless ``order`` is a valid unified-sequence layout."""
    order = list(order)
    if sorted(order) != sorted(Segment):
        raise ValueError("order must list every segment exactly once")
    if order[0] is not Segment.IMG or order[-1] is not Segment.TEXT:
        raise ValueError("IMG must be first and TEXT last")
    plan = order.index(Segment.PLAN_Q)
    if order[plan - 1] is not Segment.EGO:
        raise ValueError("EGO must immediately precede PLAN_Q")
    if order.index(Segment.DET_Q) > plan or order.index(Segment.LANE_Q) > plan:
        raise ValueError("DET_Q and LANE_Q must precede PLAN_Q")


class WorldConfig(_Frozen):
    world_extent: float = 10.0
    n_objects_range: tuple[int, int] = (0, 4)
    n_lanes_range: tuple[int, int] = (1, 3)
    horizon: int = 6
    dt: float = 0.5
    grid_hw: tuple[int, int] = (16, 16)
    grid_channels: int = 6
    lane_points: int = 8
    n_classes: int = 3
    speed_range: tuple[float, float] = (1.0, 2.5)
    ego_radius: float = 0.5
    turn_curvature: float = 0.15
    corridor_half_width: float = 1.0
    safety_margin: float = 0.25

    @model_validator(mode="after")
    def _check(self) -> WorldConfig:
        if self.world_extent <= 0:
            raise ValueError("world_extent must be positive")
        for name in ("n_objects_range", "n_lanes_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must satisfy 0 <= min <= max, got {(lo, hi)}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if min(self.grid_hw) < 4:
            raise ValueError("grid dimensions must be >= 4")
        if not 3 <= self.grid_channels <= 3 + self.n_classes:
            raise ValueError("grid_channels must lie in [3, 3 + n_classes]")
        if self.lane_points < 2:
            raise ValueError("lane_points must be >= 2")
        lo, hi = self.speed_range
        if not 0 <= lo <= hi:
            raise ValueError("speed_range must satisfy 0 <= min <= max")
        # The ego starts in the central quarter; the longest plan must stay in bounds.
        if hi * self.horizon * self.dt > 0.75 * self.world_extent:
            raise ValueError("speed_range too fast: trajectories would leave the world")
        if self.turn_curvature * hi * self.horizon * self.dt >= math.pi:
            raise ValueError("turn_curvature too large for the planning horizon")
        if self.ego_radius <= 0:
            raise ValueError("ego_radius must be positive")
        return self

    @property
    def n_cells(self) -> int:
        return self.grid_hw[0] * self.grid_hw[1]


class DecoderConfig(_Frozen):
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 4
    n_mixed: int = 2
    d_ffn: int = 128
    rotary_base: float = 10000.0
    e3d_scale: float = 1.0
    e3d_temperature: float = 100.0
    e3d_mode: E3DMode = E3DMode.SINUSOID

    @model_validator(mode="after")
    def _check(self) -> DecoderConfig:
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        # Rotary needs pairs; the 3D embedding needs a sin/cos pair per axis half.
        if self.d_head % 4:
            raise ValueError("d_head must be a multiple of 4")
        if not 1 <= self.n_mixed <= self.n_layers:
            raise ValueError("n_mixed must satisfy 1 <= n_mixed <= n_layers")
        if self.e3d_scale <= 0:
            raise ValueError("e3d_scale must be positive")
        return self

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


class LayoutConfig(_Frozen):
    order: tuple[Segment, ...] = DEFAULT_ORDER
    n_det: int = 8
    n_lane: int = 4
    n_text_max: int = 16
    group_attention: Literal["joint", "per_group"] = "joint"

    @model_validator(mode="after")
    def _check(self) -> LayoutConfig:
        check_segment_order(self.order)
        if self.n_det < 0 or self.n_lane < 0:
            raise ValueError("query counts must be non-negative")
        if self.n_text_max < 2:
            raise ValueError("n_text_max must leave room for BOS and EOS")
        return self

    @property
    def has_perception(self) -> bool:
        return self.n_det + self.n_lane > 0


class LossConfig(_Frozen):
    box_weight: float = 5.0
    no_object_weight: float = 0.1


class LoraSpec(_Frozen):
    rank: int = 4
    alpha: float = 8.0
    targets: tuple[Literal["w_q", "w_v"], ...] = ("w_q", "w_v")
    layers: Literal["deep", "mixed", "all"] = "deep"

    @field_validator("rank")
    @classmethod
    def _positive_rank(cls, v: int) -> int:
        if v < 1:
            raise ValueError("LoRA rank must be >= 1")
        return v

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank


class StageConfig(_Frozen):
    stage: StageName
    lambda_perc: float = 1.0
    lambda_plan: float = 1.0
    trainable: tuple[str, ...] | None = None
    lora: LoraSpec | None = None
    text_loss: bool = True
    steps: int = 300
    lr: float = 1e-3
    weight_decay: float = 0.01
    warmup_frac: float = 0.05
    grad_clip: float = 1.0
    batch_size: int = 8
    seed: int = 0
    log_every: int = 50

    @model_validator(mode="after")
    def _check(self) -> StageConfig:
        if self.trainable is not None:
            unknown = set(self.trainable) - set(PARAMETER_GROUPS)
            if unknown:
                raise ValueError(f"unknown parameter groups: {sorted(unknown)}")
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if self.lambda_perc < 0 or self.lambda_plan < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0 <= self.warmup_frac < 1:
            raise ValueError("warmup_frac must lie in [0, 1)")
        return self


def _default_stages() -> list[StageConfig]:
    return [
        StageConfig(stage=StageName.PRETRAIN_PERC_LANG, lora=LoraSpec()),
        StageConfig(stage=StageName.PLAN_ADAPT, lora=LoraSpec()),
        StageConfig(stage=StageName.JOINT),
    ]


class TransferConfig(_Frozen):
    use_pretrained: bool = True
    attn: WeightSource = WeightSource.PRETRAINED
    ffn: WeightSource = WeightSource.RANDOM
    source: Path | None = None


class PretrainConfig(_Frozen):
    steps: int = 400
    lr: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    log_every: int = 100


class DataConfig(_Frozen):
    n_train: int = 64
    n_val: int = 16
    n_test: int = 16
    train_seed: int = 0
    val_seed: int = 10000
    test_seed: int = 20000

    @model_validator(mode="after")
    def _check(self) -> DataConfig:
        splits = list(self.split_seeds().items())
        for name, (_, n) in splits:
            if n < 1:
                raise ValueError(f"split {name} needs at least one sample")
        for i, (a, (a_seed, a_n)) in enumerate(splits):
            for b, (b_seed, b_n) in splits[i + 1:]:
                if a_seed < b_seed + b_n and b_seed < a_seed + a_n:
                    raise ValueError(f"seed ranges of splits {a} and {b} overlap")
        return self

    def split_seeds(self) -> dict[str, tuple[int, int]]:
        return {
            "train": (self.train_seed, self.n_train),
            "val": (self.val_seed, self.n_val),
            "test": (self.test_seed, self.n_test),
        }


class EvalConfig(_Frozen):
    horizons: tuple[int, ...] | None = None  # 1-based waypoint steps
    ego_radius: float = 0.5
    match_radius: float = 0.5
    score_threshold: float = 0.5
    lane_match_threshold: float = 1.0

    @model_validator(mode="after")
    def _check(self) -> EvalConfig:
        if self.ego_radius <= 0 or self.match_radius <= 0:
            raise ValueError("ego_radius and match_radius must be positive")
        return self

    def horizon_indices(self, horizon: int) -> list[int]:
        steps = self.horizons or sorted({max(1, horizon * k // 3) for k in (1, 2, 3)})
        return [s - 1 for s in steps]


MIN_BENCH_RUNS = 10
MIN_BENCH_WARMUP = 10


class BenchConfig(_Frozen):
    n_runs: int = 100
    warmup: int = 10
    batch_size: int = 1
    threads: int = 1

    @model_validator(mode="after")
    def _check(self) -> BenchConfig:
        if self.n_runs < MIN_BENCH_RUNS:
            raise ValueError(f"latency bench needs at least {MIN_BENCH_RUNS} timed runs, got {self.n_runs}")
        if self.warmup < MIN_BENCH_WARMUP:
            raise ValueError(f"latency bench needs at least {MIN_BENCH_WARMUP} warmup runs, got {self.warmup}")
        if self.batch_size < 1 or self.threads < 1:
            raise ValueError("batch_size and threads must be positive")
        return self


class ExperimentConfig(_Frozen):
    world: WorldConfig = Field(default_factory=WorldConfig)
    model: DecoderConfig = Field(default_factory=DecoderConfig)
    layout: LayoutConfig = Field(default_factory=LayoutConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    stages: tuple[StageConfig, ...] = Field(default_factory=lambda: tuple(_default_stages()))
    transfer: TransferConfig = Field(default_factory=TransferConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)
    seed: int = 0
    output_dir: Path = Path("runs")
    ablation: bool = False

    @model_validator(mode="after")
    def _check(self) -> ExperimentConfig:
        layout, world = self.layout, self.world
        if layout.n_det and layout.n_det < world.n_objects_range[1]:
            raise ValueError("n_det must be >= the maximum object count")
        if layout.n_lane and layout.n_lane < world.n_lanes_range[1]:
            raise ValueError("n_lane must be >= the maximum lane count")
        names = [s.stage for s in self.stages]
        if not self.ablation and names and tuple(names) != PIPELINE:
            raise ValueError(
                "stages must run in order PRETRAIN_PERC_LANG -> PLAN_ADAPT -> JOINT "
                "(set ablation: true for partial or reordered runs)"
            )
        if not layout.has_perception and StageName.PRETRAIN_PERC_LANG in names:
            raise ValueError("PRETRAIN_PERC_LANG needs detection or lane queries")
        for idx in self.eval.horizon_indices(world.horizon):
            if not 0 <= idx < world.horizon:
                raise ValueError(f"eval horizon step {idx + 1} outside 1..{world.horizon}")
        return self


# --- Dataset records ---


class SceneRecord(BaseModel):
    seed: int
    objects: list[float]
    lanes: list[float]
    ego: list[float]
    gt_trajectory: list[float]
    caption: str


# --- Reports ---


class PlanMetrics(BaseModel):
    horizons: list[int]
    l2_per_horizon: list[float]
    l2_avg: float
    collision_per_horizon: list[float] = []
    collision_avg: float = 0.0


class LaneMetrics(BaseModel):
    mean_l1: float
    recall: float


class DetMetrics(BaseModel):
    precision: float
    recall: float
    ap: float
    n_pred: int
    n_gt: int
    lanes: LaneMetrics | None = None


class TextMetrics(BaseModel):
    exact_match: float
    token_accuracy: float


class LatencyReport(BaseModel):
    mode: ForwardMode
    n_runs: int
    run_ms: list[float]
    median_ms: float
    layers_executed: int
    ratio: float | None = None


class LatencyComparison(BaseModel):
    full: LatencyReport
    truncated: LatencyReport
    ratio: float
    reference_ratio: float = 156 / 263


class ExperimentReport(BaseModel):
    config: dict
    stage_losses: dict[str, dict[str, float]] = {}
    plan_metrics: PlanMetrics | None = None
    det_metrics: DetMetrics | None = None
    text_metrics: TextMetrics | None = None
    latency: LatencyComparison | None = None
    checkpoints: dict[str, str] = {}
    runtime_s: float = 0.0


class AblationRun(BaseModel):
    name: str
    variant: dict[str, str | float | int | bool | list[str]]
    seed: int
    status: Literal["planned", "done", "diverged"] = "planned"
    stage_losses: dict[str, dict[str, float]] = {}
    plan_metrics: PlanMetrics | None = None
    det_metrics: DetMetrics | None = None
    perception_val_loss: float | None = None
    run_dir: str | None = None


class AblationReport(BaseModel):
    preset: str
    n_runs: int
    config: dict
    runs: list[AblationRun]
    summary: dict[str, str | float | int | bool | None] = {}
    runtime_s: float = 0.0
