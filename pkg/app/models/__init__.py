from app.models.schemas import (
    COMMANDS,
    DEFAULT_ORDER,
    LANE_FIRST_ORDER,
    MIN_BENCH_RUNS,
    MIN_BENCH_WARMUP,
    PARAMETER_GROUPS,
    PIPELINE,
    AblationReport,
    AblationRun,
    BenchConfig,
    Command,
    DataConfig,
    DecoderConfig,
    DetMetrics,
    E3DMode,
    EvalConfig,
    ExperimentConfig,
    ExperimentReport,
    ForwardMode,
    LaneMetrics,
    LatencyComparison,
    LatencyReport,
    LayoutConfig,
    LoraSpec,
    LossConfig,
    PlanMetrics,
    PretrainConfig,
    SceneRecord,
    Segment,
    StageConfig,
    StageName,
    TextMetrics,
    TransferConfig,
    WeightSource,
    WorldConfig,
    check_segment_order,
)

__all__ = [
    "COMMANDS",
    "DEFAULT_ORDER",
    "LANE_FIRST_ORDER",
    "MIN_BENCH_RUNS",
    "MIN_BENCH_WARMUP",
    "PARAMETER_GROUPS",
    "PIPELINE",
    "AblationReport",
    "AblationRun",
    "BenchConfig",
    "Command",
    "DataConfig",
    "DecoderConfig",
    "DetMetrics",
    "E3DMode",
    "EvalConfig",
    "ExperimentConfig",
    "ExperimentReport",
    "ForwardMode",
    "LaneMetrics",
    "LatencyComparison",
    "LatencyReport",
    "LayoutConfig",
    "LoraSpec",
    "LossConfig",
    "PlanMetrics",
    "PretrainConfig",
    "SceneRecord",
    "Segment",
    "StageConfig",
    "StageName",
    "TextMetrics",
    "TransferConfig",
    "WeightSource",
    "WorldConfig",
    "check_segment_order",
]
