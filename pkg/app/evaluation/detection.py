"""Center-distance detection metrics and lane matching metrics."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import torch

from app.errors import ConfigError
from app.heads import DetPrediction, LanePrediction, hungarian_match, lane_cost
from app.models import DetMetrics, LaneMetrics


@dataclass(frozen=True, slots=True)
class Detection:
    x: float
    y: float
    cls: int
    score: float = 1.0


def detections_from_prediction(pred: DetPrediction, threshold: float) -> list[list[Detection]]:
    scores, classes = pred.scores()
    centers = pred.centers
    out = []
    for b in range(scores.shape[0]):
        keep = (scores[b] >= threshold).nonzero().squeeze(1).tolist()
        out.append([
            Detection(
                x=float(centers[b, q, 0]), y=float(centers[b, q, 1]),
                cls=int(classes[b, q]), score=float(scores[b, q]),
            )
            for q in keep
        ])
    return out


def average_precision(tp: np.ndarray, n_gt: int) -> float:
    """All-point interpolated AP for a score-ranked TP/FP sequence."""
    if n_gt == 0:
        return 1.0 if len(tp) == 0 else 0.0
    if len(tp) == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    recall = np.concatenate([[0.0], cum_tp / n_gt])
    precision = np.concatenate([[1.0], cum_tp / np.arange(1, len(tp) + 1)])
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(np.sum((recall[1:] - recall[:-1]) * envelope[1:]))


def detection_metrics(preds: Sequence[Sequence[Detection]], gts: Sequence[Sequence], match_radius: float) -> DetMetrics:
    """Greedy matching by descending score against unclaimed same-class ground truth.

    ``gts`` holds per-sample objects with ``x``, ``y`` and ``cls``. Precision is
    0 when there are no predictions; recall is 1 when there is no ground truth.
    """
    if match_radius <= 0:
        raise ConfigError("match_radius must be positive")
    ranked = sorted(
        ((d.score, i, d) for i, dets in enumerate(preds) for d in dets), key=lambda t: -t[0],
    )
    claimed = [np.zeros(len(g), dtype=bool) for g in gts]
    tp = np.zeros(len(ranked))
    for k, (_, i, det) in enumerate(ranked):
        best, best_dist = -1, match_radius
        for j, gt in enumerate(gts[i]):
            if claimed[i][j] or gt.cls != det.cls:
                continue
            dist = float(np.hypot(det.x - gt.x, det.y - gt.y))
            if dist <= best_dist:
                best, best_dist = j, dist
        if best >= 0:
            claimed[i][best] = True
            tp[k] = 1.0

    n_pred, n_gt, n_tp = len(ranked), sum(len(g) for g in gts), float(tp.sum())
    return DetMetrics(
        precision=n_tp / n_pred if n_pred else 0.0,
        recall=n_tp / n_gt if n_gt else 1.0,
        ap=average_precision(tp, n_gt),
        n_pred=n_pred,
        n_gt=n_gt,
    )


def lane_metrics(
    pred: LanePrediction, gts: Sequence[torch.Tensor | np.ndarray], threshold: float, existence: float = 0.5,
) -> LaneMetrics:
    """Matched mean point L1 and the fraction of ground-truth lanes matched within ``threshold``."""
    probs = pred.existence_logits.detach().sigmoid()
    costs, recalled, n_gt = [], 0, 0
    for b, gt in enumerate(gts):
        gt = torch.as_tensor(np.asarray(gt), dtype=pred.points.dtype)
        n_gt += len(gt)
        kept = pred.points[b, probs[b] >= existence].detach()
        if not len(gt) or not len(kept):
            continue
        cost = lane_cost(kept, gt)
        for r, c in hungarian_match(cost):
            value = float(cost[r, c])
            costs.append(value)
            recalled += value <= threshold
    return LaneMetrics(
        mean_l1=float(np.mean(costs)) if costs else 0.0,
        recall=recalled / n_gt if n_gt else 1.0,
    )
