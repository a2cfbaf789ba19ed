from app.heads.heads import (
    BOX_PARAMS,
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
from app.heads.losses import (
    LossBreakdown,
    canonicalize_lanes,
    detection_loss,
    lane_cost,
    lane_loss,
    lm_loss,
    planning_loss,
)
from app.heads.matching import assignment_cost, hungarian_match
from app.heads.targets import SceneTargets, box_params, build_targets

__all__ = [
    "BOX_PARAMS",
    "DetHead",
    "DetPrediction",
    "LaneHead",
    "LanePrediction",
    "LossBreakdown",
    "PlanHead",
    "PlanPrediction",
    "SceneTargets",
    "assignment_cost",
    "box_params",
    "build_targets",
    "canonicalize_lanes",
    "det_decode",
    "detection_loss",
    "hungarian_match",
    "lane_cost",
    "lane_decode",
    "lane_loss",
    "lm_loss",
    "plan_decode",
    "planning_loss",
]
