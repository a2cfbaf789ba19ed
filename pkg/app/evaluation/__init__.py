from app.evaluation.detection import (
    Detection,
    average_precision,
    detection_metrics,
    detections_from_prediction,
    lane_metrics,
)
from app.evaluation.latency import MIN_RUNS, compare_latency, latency_bench, truncation_check
from app.evaluation.planning import collision_flags, collision_rate, l2_error, plan_metrics
from app.evaluation.runner import EvaluationResult, evaluate_model
from app.evaluation.text import text_metrics

__all__ = [
    "MIN_RUNS",
    "Detection",
    "EvaluationResult",
    "average_precision",
    "collision_flags",
    "collision_rate",
    "compare_latency",
    "detection_metrics",
    "detections_from_prediction",
    "evaluate_model",
    "l2_error",
    "lane_metrics",
    "latency_bench",
    "plan_metrics",
    "text_metrics",
    "truncation_check",
]
