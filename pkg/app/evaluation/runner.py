from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from app.decoder import DecoderModel, generate_text
from app.evaluation.detection import detection_metrics, detections_from_prediction, lane_metrics
from app.evaluation.planning import plan_metrics
from app.evaluation.text import text_metrics
from app.models import DetMetrics, EvalConfig, ForwardMode, PlanMetrics, TextMetrics
from app.tokens import BOS, EOS, PAD
from app.training.data import PreparedSplit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvaluationResult:
    plan: PlanMetrics
    det: DetMetrics | None
    text: TextMetrics | None


def _reference_ids(text_ids: torch.Tensor) -> list[list[int]]:
    return [[int(t) for t in row if int(t) not in (PAD, BOS, EOS)] for row in text_ids]


@torch.no_grad()
def evaluate_model(
    model: DecoderModel, split: PreparedSplit, cfg: EvalConfig, with_text: bool = True,
) -> EvaluationResult:
    """Structured outputs come from a TRUNCATED forward; captions from greedy FULL decoding."""
    model.eval()
    batch, scenes = split.batch, split.scenes
    trace = model(batch, ForwardMode.TRUNCATED)
    preds = model.decode(trace, batch)

    waypoints = preds.plan.waypoints.cpu().numpy().astype(float)
    gt = np.stack([s.trajectory_array() for s in scenes])
    plan = plan_metrics(
        waypoints, gt, [s.objects for s in scenes], [s.ego for s in scenes],
        cfg.horizon_indices(model.world.horizon), cfg.ego_radius,
    )

    det = None
    layout = model.layout
    if layout.n_det:
        dets = detections_from_prediction(preds.det, cfg.score_threshold)
        det = detection_metrics(dets, [s.objects for s in scenes], cfg.match_radius)
    if layout.n_lane:
        lanes = lane_metrics(preds.lane, split.targets.lanes, cfg.lane_match_threshold)
        if det is None:
            det = DetMetrics(precision=0.0, recall=0.0, ap=0.0, n_pred=0, n_gt=0, lanes=lanes)
        else:
            det = det.model_copy(update={"lanes": lanes})

    text = None
    if with_text:
        generated = generate_text(model, batch, layout.n_text_max)
        text = text_metrics(generated, _reference_ids(batch.text_ids))

    log.info(
        "Evaluated %d scenes: L2 avg %.4f, collision avg %.4f%s",
        len(scenes), plan.l2_avg, plan.collision_avg,
        "" if det is None else f", det recall {det.recall:.3f}",
    )
    return EvaluationResult(plan=plan, det=det, text=text)
