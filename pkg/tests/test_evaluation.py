from __future__ import annotations

import math

import numpy as np
import pytest
import torch
from pydantic import ValidationError

from app.config import parse_config
from app.errors import ConfigError, ContractViolation
from app.evaluation import (
    Detection,
    average_precision,
    collision_flags,
    collision_rate,
    compare_latency,
    detection_metrics,
    evaluate_model,
    l2_error,
    lane_metrics,
    latency_bench,
    text_metrics,
)
from app.heads import LanePrediction
from app.models import BenchConfig, EvalConfig, ForwardMode
from app.scene import Box


def _box(x=0.0, y=0.0, w=1.0, l=2.0, heading=0.0, cls=0) -> Box:  # noqa: E741
    return Box(x=x, y=y, w=w, l=l, heading=heading, cls=cls, speed=0.0)


# --- l2_error ---


def test_l2_at_each_horizon():
    pred = np.array([[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]])
    gt = np.array([[[0.0, 0.0], [1.0, 1.0], [5.0, 4.0]]])
    metrics = l2_error(pred, gt, [0, 1, 2])
    assert metrics.l2_per_horizon == pytest.approx([0.0, 1.0, 5.0])
    assert metrics.l2_avg == pytest.approx(2.0)


def test_l2_is_symmetric_and_zero_on_identity():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 6, 2)), rng.normal(size=(4, 6, 2))
    assert l2_error(a, b, [1, 3, 5]).l2_per_horizon == pytest.approx(l2_error(b, a, [1, 3, 5]).l2_per_horizon)
    assert l2_error(a, a, [1, 3, 5]).l2_avg == 0.0


def test_l2_rejects_out_of_range_horizons():
    with pytest.raises(ContractViolation):
        l2_error(np.zeros((1, 3, 2)), np.zeros((1, 3, 2)), [3])


def test_default_horizons_are_thirds_of_the_plan():
    assert EvalConfig().horizon_indices(6) == [1, 3, 5]
    assert EvalConfig(horizons=(2,)).horizon_indices(6) == [1]


# --- collision_rate ---


def test_far_away_objects_never_collide():
    per_horizon, avg = collision_rate([np.zeros((3, 2))], [[_box(x=50.0)]], ego_radius=0.5)
    assert per_horizon == [0.0, 0.0, 0.0] and avg == 0.0


def test_waypoint_inside_a_box_collides():
    assert collision_flags(np.array([[0.0, 0.0]]), [_box()], 0.5).tolist() == [True]


def test_touching_counts_as_a_collision():
    assert collision_flags(np.array([[1.5, 0.0]]), [_box(w=1.0, l=2.0)], 0.5).tolist() == [True]
    assert collision_flags(np.array([[1.5001, 0.0]]), [_box(w=1.0, l=2.0)], 0.5).tolist() == [False]


def test_collisions_grow_with_the_radius():
    rng = np.random.default_rng(1)
    trajs = rng.uniform(-8, 8, size=(20, 4, 2))
    boxes = [[_box(x=float(x), y=float(y)) for x, y in rng.uniform(-8, 8, size=(3, 2))] for _ in range(20)]
    rates = [collision_rate(trajs, boxes, r)[1] for r in (0.1, 0.5, 1.0, 2.0)]
    assert rates == sorted(rates)


def test_ego_frame_trajectories_are_moved_to_the_world(scenes):
    scene = scenes[0]
    ego_frame = np.zeros((1, 1, 2))
    box = _box(x=scene.ego.x, y=scene.ego.y, w=0.2, l=0.2)
    _, avg = collision_rate(ego_frame, [[box]], 0.1, egos=[scene.ego])
    assert avg == 1.0


@pytest.mark.parametrize("radius", [0.0, -1.0])
def test_non_positive_radius_is_rejected(radius):
    with pytest.raises(ConfigError):
        collision_rate([np.zeros((2, 2))], [[]], radius)


# --- detection_metrics ---


GT = [[_box(x=0.0, y=0.0), _box(x=5.0, y=5.0, cls=1)]]


def test_perfect_detections():
    preds = [[Detection(0.0, 0.0, 0), Detection(5.0, 5.0, 1)]]
    metrics = detection_metrics(preds, GT, match_radius=0.5)
    assert (metrics.precision, metrics.recall, metrics.ap) == (1.0, 1.0, 1.0)


def test_no_detections():
    metrics = detection_metrics([[]], GT, match_radius=0.5)
    assert (metrics.precision, metrics.recall, metrics.ap) == (0.0, 0.0, 0.0)
    assert metrics.n_gt == 2


def test_duplicate_detection_is_a_false_positive():
    preds = [[Detection(0.1, 0.0, 0, score=0.9), Detection(0.0, 0.1, 0, score=0.8)]]
    metrics = detection_metrics(preds, [[_box()]], match_radius=0.5)
    assert metrics.precision == 0.5
    assert metrics.recall == 1.0
    assert metrics.ap == 1.0


def test_wrong_class_never_matches():
    metrics = detection_metrics([[Detection(0.0, 0.0, 1)]], [[_box(cls=0)]], match_radius=0.5)
    assert metrics.recall == 0.0


def test_recall_grows_with_the_match_radius():
    preds = [[Detection(0.3, 0.0, 0), Detection(5.0, 6.0, 1)]]
    recalls = [detection_metrics(preds, GT, r).recall for r in (0.1, 0.5, 1.0, 2.0)]
    assert recalls == sorted(recalls) == [0.0, 0.5, 1.0, 1.0]


def test_match_radius_must_be_positive():
    with pytest.raises(ConfigError):
        detection_metrics([[]], [[]], match_radius=0.0)


def test_average_precision_stays_in_the_unit_interval():
    rng = np.random.default_rng(2)
    for _ in range(50):
        tp = (rng.random(rng.integers(0, 10)) < 0.5).astype(float)
        n_gt = int(tp.sum()) + int(rng.integers(0, 3))
        assert 0.0 <= average_precision(tp, n_gt) <= 1.0


def test_lane_metrics_for_an_exact_prediction():
    lane = torch.tensor([[-4.0, 1.0], [0.0, 1.0], [4.0, 1.0]])
    pred = LanePrediction(points=torch.stack([lane, lane + 5.0])[None], existence_logits=torch.tensor([[10.0, -10.0]]))
    metrics = lane_metrics(pred, [lane], threshold=1.0)
    assert metrics.mean_l1 == 0.0 and metrics.recall == 1.0
    missed = lane_metrics(pred, [lane + torch.tensor([0.0, 2.0])], threshold=1.0)
    assert missed.mean_l1 == pytest.approx(2.0) and missed.recall == 0.0


# --- text_metrics ---


def test_text_metrics_count_exact_and_positional_matches():
    metrics = text_metrics([[3, 4, 5], [3, 9]], [[3, 4, 5], [3, 4, 6]])
    assert metrics.exact_match == 0.5
    assert metrics.token_accuracy == pytest.approx(4 / 6)


def test_text_metrics_need_aligned_inputs():
    with pytest.raises(ContractViolation):
        text_metrics([[1]], [])


# --- latency ---


def test_latency_bench_needs_enough_runs(model, split):
    with pytest.raises(ConfigError):
        latency_bench(model, split.batch, ForwardMode.FULL, n_runs=9)
    with pytest.raises(ConfigError):
        latency_bench(model, split.batch, ForwardMode.FULL, n_runs=10, warmup=9)


@pytest.mark.parametrize("kwargs", [{"n_runs": 9}, {"warmup": 0}, {"warmup": 9}])
def test_bench_config_enforces_the_run_and_warmup_floor(kwargs):
    with pytest.raises(ValidationError):
        BenchConfig(**kwargs)


def test_bench_floor_is_checked_when_the_config_loads():
    with pytest.raises(ConfigError, match="warmup"):
        parse_config({"bench": {"n_runs": 10, "warmup": 0}})


def test_latency_bench_counts_executed_layers(model, split):
    full = latency_bench(model, split.batch, ForwardMode.FULL, n_runs=10, warmup=10)
    truncated = latency_bench(model, split.batch, ForwardMode.TRUNCATED, n_runs=10, warmup=10)
    assert full.layers_executed == model.cfg.n_layers
    assert truncated.layers_executed == model.cfg.n_mixed
    assert len(full.run_ms) == 10
    assert full.median_ms > 0


def test_latency_ratio_is_truncated_over_full(model, split):
    comparison = compare_latency(model, split.batch.select([0]), BenchConfig(n_runs=10, warmup=10))
    assert comparison.ratio == pytest.approx(comparison.truncated.median_ms / comparison.full.median_ms)
    assert comparison.truncated.ratio == comparison.ratio
    assert comparison.reference_ratio == pytest.approx(156 / 263)


# --- evaluate_model ---


def test_untrained_model_gives_finite_metrics(model, split):
    result = evaluate_model(model, split, EvalConfig())
    assert result.plan.horizons == [0, 1, 2]
    assert all(math.isfinite(v) for v in result.plan.l2_per_horizon)
    assert 0.0 <= result.plan.collision_avg <= 1.0
    assert result.det is not None and result.det.lanes is not None
    assert result.det.n_gt == sum(len(s.objects) for s in split.scenes)
    assert result.text is not None and 0.0 <= result.text.token_accuracy <= 1.0


def test_evaluation_without_text_skips_generation(model, split):
    assert evaluate_model(model, split, EvalConfig(), with_text=False).text is None
