from __future__ import annotations

import copy
import math

import pytest
import torch

from app.errors import CheckpointError, ConfigError, ContractViolation, TrainingDivergedError
from app.models import (
    PARAMETER_GROUPS,
    DecoderConfig,
    ForwardMode,
    LoraSpec,
    PretrainConfig,
    StageConfig,
    StageName,
    WeightSource,
)
from app.training import (
    ALL_POLICIES,
    PERCEPTION_EXCLUSIVE,
    TransferPolicy,
    apply_lora,
    bundle_from_model,
    group_digest,
    grouped_parameters,
    has_lora,
    init_from_pretrained,
    load_bundle,
    load_state,
    lr_lambda,
    merge_lora,
    model_from_bundle,
    parameter_group,
    pretrain_toy_vlm,
    run_stage,
    save_bundle,
    total_loss,
)


def _stage(stage: StageName, **kwargs) -> StageConfig:
    return StageConfig(stage=stage, **{"steps": 3, "batch_size": 2, "log_every": 0, **kwargs})


def _query_states(model, batch) -> list[torch.Tensor]:
    with torch.no_grad():
        return model(batch, ForwardMode.FULL).query_states()


# --- total_loss ---


def test_joint_loss_is_the_weighted_sum():
    components = {"perc": 0.5, "plan": 0.3, "text": 0.2}
    assert total_loss(StageName.JOINT, components) == pytest.approx(1.0)
    assert total_loss(StageName.JOINT, components, lambda_plan=2.0) == pytest.approx(1.3)


def test_stage_loss_without_text():
    assert total_loss(StageName.PLAN_ADAPT, {"plan": 0.4}, lambda_plan=2.0, use_text=False) == pytest.approx(0.8)


@pytest.mark.parametrize(("stage", "components"), [
    (StageName.JOINT, {"perc": 1.0, "text": 1.0}),
    (StageName.PRETRAIN_PERC_LANG, {"perc": 1.0, "plan": 1.0, "text": 1.0}),
    (StageName.JOINT, {"perc": 1.0, "plan": 1.0}),
])
def test_stage_loss_rejects_the_wrong_components(stage, components):
    with pytest.raises(ContractViolation):
        total_loss(stage, components)


def test_schedule_warms_up_then_decays():
    factor = lr_lambda(100, 0.1)
    assert factor(0) == pytest.approx(0.1)
    assert factor(9) == pytest.approx(1.0)
    assert factor(10) == pytest.approx(1.0)
    assert factor(55) == pytest.approx(0.5)
    assert factor(100) == pytest.approx(0.0, abs=1e-12)


# --- parameter groups ---


def test_every_parameter_belongs_to_a_known_group(model):
    apply_lora(model, LoraSpec(layers="all"))
    groups = grouped_parameters(model, model.cfg.n_mixed)
    assert set(groups) == set(PARAMETER_GROUPS)
    assert sum(len(v) for v in groups.values()) == len(list(model.parameters()))
    assert {name for name, _ in groups["lora"]} == {
        f"layers.{i}.attn.{p}.lora_{ab}" for i in range(2) for p in ("w_q", "w_v") for ab in "ab"
    }


def test_mixed_and_deep_attention_are_separate_groups():
    assert parameter_group("layers.0.attn.w_q.weight", n_mixed=1) == "backbone_attn_mixed"
    assert parameter_group("layers.1.attn.w_q.weight", n_mixed=1) == "backbone_attn_deep"
    assert parameter_group("layers.0.task_ffns.plan.fc_in.weight", n_mixed=1) == "plan_ffn"
    assert parameter_group("layers.0.task_ffns.lane.fc_in.weight", n_mixed=1) == "perception_ffn"
    with pytest.raises(ContractViolation):
        parameter_group("mystery.weight", n_mixed=1)


# --- LoRA ---


def test_fresh_adapters_do_not_change_the_output(make_model, split):
    for seed in range(10):
        model = make_model(seed=seed)
        before = _query_states(model, split.batch)
        logits = model.text_logits(split.batch).detach()
        apply_lora(model, LoraSpec(layers="all"), seed=seed)
        for a, b in zip(before, _query_states(model, split.batch)):
            assert torch.equal(a, b)
        assert torch.equal(logits, model.text_logits(split.batch).detach())


def test_merging_adapters_preserves_the_function(make_model, split64):
    for seed in range(10):
        model = make_model(seed=seed, dtype=torch.float64)
        apply_lora(model, LoraSpec(), seed=seed)
        with torch.no_grad():
            for module in model.modules():
                if hasattr(module, "lora_b"):
                    module.lora_b.normal_()
        before = model.text_logits(split64.batch).detach()
        assert merge_lora(model) == 2
        assert not has_lora(model)
        torch.testing.assert_close(model.text_logits(split64.batch).detach(), before, rtol=0, atol=1e-6)


def test_rank_larger_than_the_model_width_is_rejected(model):
    with pytest.raises(ConfigError):
        apply_lora(model, LoraSpec(rank=17))


def test_adapters_cannot_be_stacked(model):
    apply_lora(model, LoraSpec())
    with pytest.raises(ContractViolation):
        apply_lora(model, LoraSpec())


# --- run_stage ---


def test_planning_adaptation_never_touches_perception_weights(model, split, vocab, layout_cfg):
    n_mixed = model.cfg.n_mixed
    before = group_digest(model, PERCEPTION_EXCLUSIVE, n_mixed)
    plan_before = model.plan_head.fc_out.weight.detach().clone()
    result = run_stage(_stage(StageName.PLAN_ADAPT, lora=LoraSpec()), model, split, vocab, layout_cfg)
    assert group_digest(model, PERCEPTION_EXCLUSIVE, n_mixed) == before
    assert model.det_head.fc_in.weight.grad is None
    assert model.layers[0].group_attn.w_q.weight.grad is None
    assert not torch.equal(model.plan_head.fc_out.weight, plan_before)
    assert not has_lora(model)
    assert result.bundle.stage is StageName.PLAN_ADAPT
    assert len(result.curves["plan"]) == 3


def test_perception_pretraining_keeps_the_raster_embedding(model, split, vocab, layout_cfg):
    before = model.raster_embed.weight.detach().clone()
    run_stage(_stage(StageName.PRETRAIN_PERC_LANG), model, split, vocab, layout_cfg)
    assert torch.equal(model.raster_embed.weight, before)


def test_stage_runs_are_reproducible(make_model, split, vocab, layout_cfg):
    stage = _stage(StageName.JOINT, seed=3)
    a = run_stage(stage, make_model(), split, vocab, layout_cfg)
    b = run_stage(stage, make_model(), split, vocab, layout_cfg)
    assert a.curves == b.curves
    assert a.bundle.state.keys() == b.bundle.state.keys()


def test_logged_total_is_the_weighted_sum(model, split, vocab, layout_cfg):
    result = run_stage(_stage(StageName.PRETRAIN_PERC_LANG, lambda_perc=2.0), model, split, vocab, layout_cfg)
    for (_, total), (_, perc), (_, text) in zip(result.curves["total"], result.curves["perc"], result.curves["text"]):
        assert total == pytest.approx(2.0 * perc + text, abs=1e-12)


def test_text_free_stage_skips_the_language_loss(model, split, vocab, layout_cfg):
    result = run_stage(_stage(StageName.PLAN_ADAPT, text_loss=False), model, split, vocab, layout_cfg)
    assert set(result.curves) == {"plan", "total"}


def test_stage_restores_every_parameter_as_trainable(model, split, vocab, layout_cfg):
    run_stage(_stage(StageName.PLAN_ADAPT, lora=LoraSpec()), model, split, vocab, layout_cfg)
    assert all(p.requires_grad for p in model.parameters())


def test_non_finite_loss_raises_with_a_checkpoint(model, split, vocab, layout_cfg):
    stage = _stage(StageName.JOINT, lambda_plan=math.inf, lora=LoraSpec())
    with pytest.raises(TrainingDivergedError) as info:
        run_stage(stage, model, split, vocab, layout_cfg)
    assert info.value.step == 0
    assert info.value.checkpoint is not None
    assert not any("lora" in name for name in info.value.checkpoint.state)
    assert not has_lora(model)
    assert all(p.requires_grad for p in model.parameters())


def test_empty_trainable_set_is_rejected(model, split, vocab, layout_cfg):
    with pytest.raises(ConfigError):
        run_stage(_stage(StageName.JOINT, trainable=("lora",)), model, split, vocab, layout_cfg)
    assert all(p.requires_grad for p in model.parameters())


# --- checkpoints ---


def test_checkpoint_roundtrip_reproduces_outputs(tmp_path, model, split, vocab, layout_cfg):
    digest = save_bundle(bundle_from_model(model, vocab, layout_cfg, StageName.JOINT, step=7), tmp_path / "ckpt")
    bundle = load_bundle(tmp_path / "ckpt")
    assert bundle.digest == digest
    assert bundle.stage is StageName.JOINT and bundle.step == 7
    restored = model_from_bundle(bundle).eval()
    for a, b in zip(_query_states(model, split.batch), _query_states(restored, split.batch)):
        assert torch.equal(a, b)


def test_strict_load_rejects_missing_tensors(model, vocab, layout_cfg):
    state = bundle_from_model(model, vocab, layout_cfg).state
    state.pop("plan_head.fc_out.bias")
    with pytest.raises(CheckpointError):
        load_state(copy.deepcopy(model), state)


# --- pretraining and transfer ---


@pytest.fixture
def pretrained(split, vocab, decoder_cfg, world, layout_cfg):
    cfg = PretrainConfig(steps=2, batch_size=2, log_every=0)
    return pretrain_toy_vlm(split, vocab, cfg, decoder_cfg, world, layout_cfg)


def test_pretraining_starts_near_uniform(pretrained, vocab):
    first = pretrained.curves["text"][0][1]
    assert abs(first - math.log(len(vocab))) < 0.1
    assert pretrained.bundle.kind == "toy_vlm"


def test_pretraining_is_reproducible(pretrained, split, vocab, decoder_cfg, world, layout_cfg):
    again = pretrain_toy_vlm(split, vocab, PretrainConfig(steps=2, batch_size=2, log_every=0), decoder_cfg, world, layout_cfg)
    assert again.curves == pretrained.curves


def test_pretrained_attention_random_ffn(pretrained, decoder_cfg, world, layout_cfg):
    policy = TransferPolicy(attn=WeightSource.PRETRAINED, ffn=WeightSource.RANDOM)
    model = init_from_pretrained(pretrained.bundle, policy, decoder_cfg, world, layout_cfg)
    state = model.state_dict()
    source = pretrained.bundle.state
    for name in ("layers.0.attn.w_q.weight", "layers.1.attn.w_o.weight", "token_embed.weight"):
        assert torch.equal(state[name], torch.from_numpy(source[name]))
    assert not torch.equal(state["layers.0.ffn.fc_in.weight"], torch.from_numpy(source["layers.0.ffn.fc_in.weight"]))


def test_embeddings_are_copied_under_every_policy(pretrained, decoder_cfg, world, layout_cfg):
    source = pretrained.bundle.state
    for policy in ALL_POLICIES:
        state = init_from_pretrained(pretrained.bundle, policy, decoder_cfg, world, layout_cfg, seed=5).state_dict()
        for name in ("raster_embed.weight", "raster_embed.bias", "token_embed.weight", "final_norm.weight"):
            assert torch.equal(state[name], torch.from_numpy(source[name])), (policy.label, name)


def test_random_random_keeps_no_backbone_weights(pretrained, decoder_cfg, world, layout_cfg):
    policy = TransferPolicy(attn=WeightSource.RANDOM, ffn=WeightSource.RANDOM)
    state = init_from_pretrained(pretrained.bundle, policy, decoder_cfg, world, layout_cfg, seed=5).state_dict()
    source = pretrained.bundle.state
    for name in ("layers.0.attn.w_q.weight", "layers.0.ffn.fc_in.weight"):
        assert not torch.equal(state[name], torch.from_numpy(source[name]))


def test_random_policies_depend_on_the_seed(pretrained, decoder_cfg, world, layout_cfg):
    policy = TransferPolicy(attn=WeightSource.RANDOM, ffn=WeightSource.RANDOM)
    a = init_from_pretrained(pretrained.bundle, policy, decoder_cfg, world, layout_cfg, seed=0)
    b = init_from_pretrained(pretrained.bundle, policy, decoder_cfg, world, layout_cfg, seed=1)
    assert not torch.equal(a.layers[0].attn.w_q.weight, b.layers[0].attn.w_q.weight)


def test_four_transfer_policies():
    assert len(ALL_POLICIES) == 4
    assert len({p.label for p in ALL_POLICIES}) == 4


def test_incompatible_source_is_rejected(pretrained, world, layout_cfg):
    wider = DecoderConfig(d_model=32, n_heads=2, n_layers=2, n_mixed=1, d_ffn=32)
    with pytest.raises(ConfigError, match="d_model"):
        init_from_pretrained(pretrained.bundle, TransferPolicy(), wider, world, layout_cfg)
