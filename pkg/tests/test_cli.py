from __future__ import annotations

from pathlib import Path

import pytest

from app.config import config_from_yaml, dump_config, load_config, parse_config
from app.errors import ConfigError, ReportError
from app.jobs.ablate import LAMBDA_PLAN_GRID, cmd_ablate, plan_ablation
from app.jobs.report import cmd_report
from app.jobs.train import select_stages
from app.main import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from app.models import ExperimentConfig, ExperimentReport, PlanMetrics, StageName
from app.storage import read_json, write_loss_curves, write_report

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "default.yaml"


@pytest.fixture
def config_file(tmp_path, experiment) -> Path:
    path = tmp_path / "experiment.yaml"
    path.write_text(dump_config(experiment))
    return path


# --- configuration ---


def test_default_yaml_matches_the_built_in_defaults():
    assert load_config(DEFAULT_CONFIG) == ExperimentConfig()


def test_config_survives_a_yaml_roundtrip(experiment):
    assert config_from_yaml(dump_config(experiment)) == experiment


def test_overrides_replace_top_level_keys(config_file, tmp_path):
    cfg = load_config(config_file, seed=5, output_dir=tmp_path / "elsewhere")
    assert cfg.seed == 5
    assert cfg.output_dir == tmp_path / "elsewhere"


def test_stages_must_follow_the_pipeline():
    stages = [{"stage": "JOINT"}, {"stage": "PLAN_ADAPT"}, {"stage": "PRETRAIN_PERC_LANG"}]
    with pytest.raises(ConfigError):
        parse_config({"stages": stages})
    with pytest.raises(ConfigError):
        parse_config({"stages": [{"stage": "PLAN_ADAPT"}]})
    assert parse_config({"stages": [{"stage": "PLAN_ADAPT"}], "ablation": True}).ablation


def test_split_seed_ranges_must_not_overlap():
    with pytest.raises(ConfigError):
        parse_config({"data": {"n_train": 10, "val_seed": 5}})


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError):
        parse_config({"modle": {"d_model": 32}})


def test_select_stages(experiment):
    assert [s.stage for s in select_stages(experiment, "JOINT")] == [StageName.JOINT]
    assert select_stages(experiment, None) == experiment.stages
    with pytest.raises(ConfigError):
        select_stages(experiment, "WARMUP")


# --- exit codes ---


def test_missing_config_file_exits_with_config_error(tmp_path):
    assert main(["gen-data", "--config", str(tmp_path / "absent.yaml")]) == EXIT_CONFIG


@pytest.mark.parametrize("text", ["- not\n- a mapping\n", "model: {d_model: 10, n_heads: 4}\n", "world: [unclosed\n"])
def test_invalid_config_exits_with_config_error(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    assert main(["gen-data", "--config", str(path)]) == EXIT_CONFIG


def test_gen_data_writes_every_split(config_file, experiment):
    assert main(["gen-data", "--config", str(config_file)]) == EXIT_OK
    data = experiment.output_dir / "data"
    for split, n in (("train", 4), ("val", 2), ("test", 2)):
        assert len((data / f"{split}.jsonl").read_text().splitlines()) == n


def test_eval_with_a_missing_checkpoint_fails(config_file):
    assert main(["eval", "--config", str(config_file), "--checkpoint", "missing"]) == EXIT_RUNTIME


def test_unknown_preset_exits_with_config_error(config_file):
    assert main(["ablate", "--config", str(config_file), "--preset", "everything"]) == EXIT_CONFIG


# --- ablation planning ---


@pytest.mark.parametrize(("preset", "n_runs"), [
    ("token-order", 4),
    ("lambda-plan", 4),
    ("text-supervision", 4),
    ("transfer-policy", 12),
    ("stage-wise", 3),
])
def test_preset_sizes(experiment, preset, n_runs):
    runs = plan_ablation(preset, experiment)
    assert len(runs) == n_runs
    assert len({r.name for r in runs}) == n_runs
    assert all(r.cfg.ablation for r in runs)


def test_lambda_plan_grid_applies_to_every_stage(experiment):
    runs = plan_ablation("lambda-plan", experiment)
    for run, value in zip(runs, LAMBDA_PLAN_GRID):
        assert {s.lambda_plan for s in run.cfg.stages} == {value}
    assert LAMBDA_PLAN_GRID == (0.25, 0.5, 1.0, 2.0)


def test_transfer_policy_covers_four_policies_over_three_seeds(experiment):
    runs = plan_ablation("transfer-policy", experiment)
    assert {r.cfg.seed for r in runs} == {0, 1, 2}
    assert len({(r.variant["attn"], r.variant["ffn"]) for r in runs}) == 4
    assert all([s.stage for s in r.cfg.stages] == [StageName.PRETRAIN_PERC_LANG] for r in runs)


def test_unknown_preset_is_rejected(experiment):
    with pytest.raises(ConfigError, match="token-order"):
        plan_ablation("everything", experiment)


def test_dry_run_writes_the_plan(experiment):
    report = cmd_ablate(experiment, "stage-wise", dry_run=True)
    assert report.n_runs == 3
    assert {r.status for r in report.runs} == {"planned"}
    [path] = list(experiment.output_dir.glob("ablate-stage-wise-*/ablation.json"))
    assert read_json(path)["preset"] == "stage-wise"


# --- report ---


def test_report_on_an_empty_directory(tmp_path, config_file):
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ReportError, match="report.json"):
        cmd_report(empty)
    assert main(["report", "--config", str(config_file), "--dir", str(empty)]) == EXIT_RUNTIME


def test_reports_are_written_as_typed_json(tmp_path):
    plan = PlanMetrics(horizons=[1], l2_per_horizon=[0.5], l2_avg=0.5)
    path = write_report(tmp_path / "nested" / "report.json", ExperimentReport(config={"seed": 1}, plan_metrics=plan))
    assert read_json(path)["plan_metrics"]["l2_avg"] == 0.5
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ReportError):
        write_report(blocker / "report.json", ExperimentReport(config={}))


def test_report_plots_curves_and_metrics(tmp_path):
    run = tmp_path / "train-1"
    write_loss_curves(run / "curves", "0-JOINT", {"total": [(0, 2.0), (1, 1.5)], "plan": [(0, 1.0), (1, 0.8)]})
    plan = PlanMetrics(horizons=[1, 3, 5], l2_per_horizon=[0.1, 0.2, 0.3], l2_avg=0.2)
    write_report(run / "report.json", ExperimentReport(config={}, plan_metrics=plan))
    written = cmd_report(run)
    assert {p.name for p in written} == {"loss-train-1-0-JOINT.png", "plan-train-1.png"}
    assert all(p.stat().st_size > 0 for p in written)


# --- end to end ---


def test_train_eval_bench_and_report(config_file, experiment):
    out = experiment.output_dir
    assert main(["train", "--config", str(config_file)]) == EXIT_OK
    [run] = list(out.glob("train-*"))
    checkpoints = run / "checkpoints"
    for name in ("toy_vlm", "0-PRETRAIN_PERC_LANG", "1-PLAN_ADAPT", "2-JOINT"):
        assert (checkpoints / f"{name}.manifest.json").exists()
        assert (checkpoints / f"{name}.bin").exists()
    assert set(read_json(run / "report.json")["stage_losses"]) == {"0-PRETRAIN_PERC_LANG", "1-PLAN_ADAPT", "2-JOINT"}

    final = checkpoints / "2-JOINT.manifest.json"
    assert main(["eval", "--config", str(config_file), "--checkpoint", str(final)]) == EXIT_OK
    [evaluation] = list(out.glob("eval-*"))
    report = read_json(evaluation / "report.json")
    assert len(report["plan_metrics"]["l2_per_horizon"]) == 3

    assert main(["bench-latency", "--config", str(config_file), "--checkpoint", str(final)]) == EXIT_OK
    [bench] = list(out.glob("bench-*"))
    latency = read_json(bench / "report.json")["latency"]
    assert latency["full"]["layers_executed"] == experiment.model.n_layers
    assert latency["truncated"]["layers_executed"] == experiment.model.n_mixed

    assert main(["train", "--config", str(config_file), "--stage", "JOINT", "--checkpoint", str(final)]) == EXIT_OK
    assert len(list(out.glob("train-*"))) == 2

    assert main(["report", "--config", str(config_file)]) == EXIT_OK
    assert any((out / "plots").glob("loss-*.png"))
