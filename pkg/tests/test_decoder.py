from __future__ import annotations

import copy
import math
from dataclasses import replace

import pytest
import torch

from app.decoder import (
    DecoderLayer,
    RoleRoutes,
    backbone_attention,
    e3d_embed,
    ffn_dispatch,
    generate_text,
    group_self_attention,
    rotary_apply,
)
from app.errors import ContractViolation
from app.evaluation import truncation_check
from app.models import DecoderConfig, E3DMode, ForwardMode, Segment

CFG = DecoderConfig(d_model=16, n_heads=2, n_layers=2, n_mixed=1, d_ffn=32)


def _layer(mixed: bool = True, seed: int = 0) -> DecoderLayer:
    torch.manual_seed(seed)
    return DecoderLayer(CFG, mixed=mixed).double()


def _zero_(*linears) -> None:
    with torch.no_grad():
        for linear in linears:
            linear.weight.zero_()
            if linear.bias is not None:
                linear.bias.zero_()


# --- rotary_apply ---


def test_rotary_at_position_zero_is_identity():
    x = torch.randn(3, 1, 8, dtype=torch.float64)
    torch.testing.assert_close(rotary_apply(x, torch.zeros(1, dtype=torch.long)), x, rtol=0, atol=0)


def test_rotary_preserves_pair_norms():
    x = torch.randn(2, 5, 8, dtype=torch.float64)
    out = rotary_apply(x, torch.arange(5))
    torch.testing.assert_close(out.view(2, 5, 4, 2).norm(dim=-1), x.view(2, 5, 4, 2).norm(dim=-1), rtol=0, atol=1e-6)


def test_rotary_scores_depend_on_relative_position():
    q = torch.randn(1, 8, dtype=torch.float64)
    k = torch.randn(1, 8, dtype=torch.float64)

    def score(i: int, j: int) -> float:
        rq = rotary_apply(q, torch.tensor([i]))
        rk = rotary_apply(k, torch.tensor([j]))
        return float((rq * rk).sum())

    assert score(3, 1) == pytest.approx(score(5, 3), abs=1e-6)


def test_rotary_rejects_odd_head_size():
    with pytest.raises(ContractViolation):
        rotary_apply(torch.randn(1, 7), torch.tensor([1]))


# --- e3d_embed ---


def test_e3d_at_origin_alternates_zero_and_one():
    emb = e3d_embed(torch.zeros(1, 2, dtype=torch.float64), d_head=8)
    torch.testing.assert_close(emb[0], torch.tensor([0.0, 1.0] * 4, dtype=torch.float64))


def test_e3d_half_turn_on_the_first_frequency():
    scale = 2.0
    origin = e3d_embed(torch.zeros(2, dtype=torch.float64), 8, scale=scale)
    shifted = e3d_embed(torch.tensor([scale * math.pi, 0.0], dtype=torch.float64), 8, scale=scale)
    assert float(shifted[0]) == pytest.approx(0.0, abs=1e-12)
    assert float(origin[1]) == 1.0
    assert float(shifted[1]) == pytest.approx(-1.0)
    torch.testing.assert_close(shifted[4:], origin[4:])


def test_e3d_is_deterministic():
    ref = torch.tensor([[1.5, -2.0]], dtype=torch.float64)
    torch.testing.assert_close(e3d_embed(ref, 8), e3d_embed(ref, 8), rtol=0, atol=0)


def test_e3d_rejects_text_tokens():
    with pytest.raises(ContractViolation):
        e3d_embed(torch.tensor([[float("nan"), float("nan")]]), 8)


# --- backbone_attention ---


def test_single_token_attention_adds_value_output_to_input():
    layer = _layer()
    x = torch.randn(1, 1, 16, dtype=torch.float64)
    out = backbone_attention(
        x, torch.ones(1, 1, dtype=torch.bool), torch.arange(1), None, layer,
        torch.tensor([False]), normalize=False,
    )
    torch.testing.assert_close(out, x + layer.attn.w_o(layer.attn.w_v(x)))


def test_query_rows_drop_the_residual():
    layer = _layer()
    _zero_(layer.attn.w_v, layer.attn.w_o)
    x = torch.randn(1, 2, 16, dtype=torch.float64)
    out = backbone_attention(
        x, torch.ones(2, 2, dtype=torch.bool).tril(), torch.arange(2), None, layer, torch.tensor([False, True]),
    )
    torch.testing.assert_close(out[0, 0], x[0, 0], rtol=0, atol=0)
    assert torch.count_nonzero(out[0, 1]) == 0


def test_backbone_attention_is_causal():
    layer = _layer()
    L = 6
    x = torch.randn(1, L, 16, dtype=torch.float64)
    mask = torch.ones(L, L, dtype=torch.bool).tril()
    query_rows = torch.tensor([False, True, True, False, True, False])
    e3d = torch.randn(1, L, 8, dtype=torch.float64)
    base = backbone_attention(x, mask, torch.arange(L), e3d, layer, query_rows)
    for j in range(L):
        perturbed = x.clone()
        perturbed[0, j] += 1.0
        out = backbone_attention(perturbed, mask, torch.arange(L), e3d, layer, query_rows)
        assert torch.equal(out[0, :j], base[0, :j])
        assert not torch.equal(out[0, j], base[0, j])


def test_backbone_attention_rejects_mismatched_mask():
    layer = _layer()
    with pytest.raises(ContractViolation):
        backbone_attention(
            torch.randn(1, 3, 16, dtype=torch.float64), torch.ones(4, 4, dtype=torch.bool),
            torch.arange(3), None, layer, torch.zeros(3, dtype=torch.bool),
        )


# --- group_self_attention ---


def test_group_attention_over_one_token():
    layer = _layer()
    x = torch.randn(1, 4, 16, dtype=torch.float64)
    mask = torch.zeros(4, 4, dtype=torch.bool)
    mask[2, 2] = True
    out = group_self_attention(x, mask, layer, normalize=False)
    torch.testing.assert_close(out[0, 2], x[0, 2] + layer.group_attn.w_o(layer.group_attn.w_v(x[0, 2])))
    for row in (0, 1, 3):
        assert torch.equal(out[0, row], x[0, row])


def test_group_attention_is_permutation_equivariant():
    layer = _layer()
    x = torch.randn(1, 6, 16, dtype=torch.float64)
    mask = torch.zeros(6, 6, dtype=torch.bool)
    mask[1:4, 1:4] = True
    perm = torch.tensor([0, 3, 1, 2, 4, 5])
    out = group_self_attention(x, mask, layer)
    out_perm = group_self_attention(x[:, perm], mask, layer)
    torch.testing.assert_close(out_perm, out[:, perm])


def test_group_attention_leaves_planning_rows_alone(model, split):
    layer = model.layers[0]
    states = torch.randn(2, model.layout.total_length, 16)
    out = group_self_attention(states, model.group_mask, layer)
    plan = model.layout.spans[Segment.PLAN_Q]
    assert torch.equal(out[:, plan], states[:, plan])


def test_group_attention_does_not_exist_in_deep_layers():
    layer = _layer(mixed=False)
    assert not hasattr(layer, "group_attn")
    assert not hasattr(layer, "task_ffns")
    with pytest.raises(ContractViolation):
        group_self_attention(torch.randn(1, 2, 16), torch.ones(2, 2, dtype=torch.bool), layer)


# --- ffn_dispatch ---


def test_zeroed_detection_ffn_leaves_only_the_residual(model):
    layer = model.layers[0].double()
    _zero_(layer.task_ffns["det"].fc_in, layer.task_ffns["det"].fc_out)
    routes = model.routes
    x = torch.randn(1, model.layout.total_length, 16, dtype=torch.float64)
    out = ffn_dispatch(x, routes, layer)
    det = model.layout.spans[Segment.DET_Q]
    text = model.layout.spans[Segment.TEXT]
    torch.testing.assert_close(out[:, det], x[:, det], rtol=0, atol=0)
    torch.testing.assert_close(out[:, text], x[:, text] + layer.ffn(layer.ffn_norm(x[:, text])))


def test_deep_layer_routes_queries_through_the_text_ffn(model):
    layer = model.layers[1]
    assert not layer.mixed
    x = torch.randn(1, model.layout.total_length, 16)
    out = ffn_dispatch(x, model.routes, layer)
    det = model.layout.spans[Segment.DET_Q]
    torch.testing.assert_close(out[:, det], x[:, det] + layer.ffn(layer.ffn_norm(x[:, det])))


def test_equal_states_and_roles_give_equal_outputs(model):
    layer = model.layers[0]
    x = torch.randn(1, model.layout.total_length, 16)
    det = model.layout.positions(Segment.DET_Q)
    x[0, det[1]] = x[0, det[0]]
    out = ffn_dispatch(x, model.routes, layer)
    torch.testing.assert_close(out[0, det[0]], out[0, det[1]], rtol=0, atol=0)


def test_plain_routes_send_everything_to_the_text_ffn():
    routes = RoleRoutes.plain(5)
    assert routes.text.tolist() == [0, 1, 2, 3, 4]
    assert not routes.query_rows.any()


# --- forward ---


def test_truncated_forward_runs_only_the_mixed_layers(make_model, split):
    cfg = DecoderConfig(d_model=16, n_heads=2, n_layers=8, n_mixed=4, d_ffn=32)
    model = make_model(cfg)
    trace = model(split.batch, ForwardMode.TRUNCATED)
    assert trace.layers_executed == 4
    assert trace.text_logits is None
    assert len(trace.det_states) == len(trace.lane_states) == len(trace.plan_states) == 4
    trace = model(split.batch, ForwardMode.FULL)
    assert trace.layers_executed == 8
    assert trace.text_logits.shape == (len(split), model.layout.n_text_max, model.vocab_size)


def test_forward_leaves_the_module_unchanged(model, split):
    attrs = {k: v for k, v in vars(model).items() if not k.startswith("_")}
    state = {k: v.clone() for k, v in model.state_dict().items()}
    with torch.no_grad():
        model(split.batch, ForwardMode.FULL)
        model(split.batch, ForwardMode.TRUNCATED)
    assert {k: v for k, v in vars(model).items() if not k.startswith("_")} == attrs
    for name, value in model.state_dict().items():
        assert torch.equal(value, state[name]), name


def test_truncated_forward_cannot_produce_text(model, split):
    with pytest.raises(ContractViolation):
        model(split.batch, ForwardMode.TRUNCATED, need_text=True)


def test_truncation_is_lossless(model64, split64):
    assert truncation_check(model64, split64.batch) == 0.0
    generator = torch.Generator().manual_seed(0)
    for _ in range(50):
        batch = replace(
            split64.batch,
            img_features=torch.rand(split64.batch.img_features.shape, generator=generator, dtype=torch.float64),
        )
        assert truncation_check(model64, batch) == 0.0


def test_deep_weights_never_reach_the_query_states(model64, split64):
    perturbed = copy.deepcopy(model64)
    with torch.no_grad():
        for name, param in perturbed.named_parameters():
            if name.startswith("layers.1."):
                param.normal_()
    assert truncation_check(model64, split64.batch, reference=perturbed) == 0.0


def test_mixed_weights_do_reach_the_query_states(model64, split64):
    perturbed = copy.deepcopy(model64)
    with torch.no_grad():
        perturbed.layers[0].attn.w_q.weight.normal_()
    assert truncation_check(model64, split64.batch, reference=perturbed) > 0.0


def test_captions_do_not_affect_structured_outputs(model, split):
    batch = split.batch
    ids = batch.text_ids.clone()
    ids[:, 1] = torch.where(ids[:, 1] == 3, 4, 3)
    other = batch.with_text(ids)
    a = model(batch, ForwardMode.FULL)
    b = model(other, ForwardMode.FULL)
    for x, y in zip(a.query_states(), b.query_states()):
        assert torch.equal(x, y)
    pa, pb = model.decode(a, batch), model.decode(b, other)
    assert torch.equal(pa.plan.waypoints, pb.plan.waypoints)
    assert torch.equal(pa.det.params, pb.det.params)
    assert torch.equal(pa.lane.points, pb.lane.points)
    assert not torch.equal(a.text_logits, b.text_logits)


def test_learned_3d_map_keeps_truncation_lossless(make_model, split):
    model = make_model(CFG.model_copy(update={"e3d_mode": E3DMode.LEARNED}))
    assert model.e3d.mlp is not None
    assert truncation_check(model, split.batch) == 0.0


def test_decoded_plan_is_anchor_plus_offsets(model, split):
    trace = model(split.batch, ForwardMode.TRUNCATED)
    plan = model.decode(trace, split.batch).plan
    torch.testing.assert_close(plan.waypoints - plan.offsets, split.batch.plan_anchor)


# --- generate_text ---


def test_generation_with_zero_length_is_empty(model, split):
    assert generate_text(model, split.batch, max_len=0) == [[] for _ in range(len(split))]


def test_greedy_generation_is_deterministic(model, split):
    first = generate_text(model, split.batch, max_len=6)
    assert first == generate_text(model, split.batch, max_len=6)
    assert all(len(ids) <= 6 for ids in first)
