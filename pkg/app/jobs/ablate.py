"""One-command ablation grids over token order, loss weights, text supervision, weight transfer and stages."""
from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable, Iterable
from dataclasses import dataclass
from pathlib import Path

import torch

from app.config import parse_config
from app.errors import ConfigError, TrainingDivergedError
from app.jobs.evaluate import evaluate_split
from app.jobs.pretrain import pretrain_source
from app.jobs.runs import load_scenes, new_run_dir, prepare
from app.jobs.train import TrainOutcome, train_pipeline
from app.models import (
    DEFAULT_ORDER,
    LANE_FIRST_ORDER,
    PIPELINE,
    AblationReport,
    AblationRun,
    ExperimentConfig,
    StageName,
    WeightSource,
)
from app.storage import write_report
from app.training import ALL_POLICIES, CheckpointBundle, TransferPolicy, compute_components, load_bundle

log = logging.getLogger(__name__)

LAMBDA_PLAN_GRID = (0.25, 0.5, 1.0, 2.0)
TRANSFER_SEEDS = 3


@dataclass(frozen=True)
class PlannedRun:
    name: str
    variant: dict
    cfg: ExperimentConfig
    policy: TransferPolicy | None = None


def _merge(base: dict, changes: dict) -> dict:
    out = dict(base)
    for key, value in changes.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _variant(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return parse_config(_merge(cfg.model_dump(mode="json"), {"ablation": True, **changes}))


def _stages(cfg: ExperimentConfig, names: Iterable[StageName], **overrides) -> list[dict]:
    """Stage dicts for ``names`` taken from the config (defaults for stages it lacks)."""
    configured = {s.stage: s.model_dump(mode="json") for s in cfg.stages}
    return [{**configured.get(name, {"stage": str(name)}), **overrides} for name in names]


# --- Presets ---


def _token_order(cfg: ExperimentConfig) -> list[PlannedRun]:
    runs = []
    for order_name, order in (("det-lane-plan", DEFAULT_ORDER), ("lane-det-plan", LANE_FIRST_ORDER)):
        for regime, names in (("adaptation", PIPELINE[:2]), ("joint", PIPELINE)):
            variant = {"order": order_name, "regime": regime}
            runs.append(PlannedRun(
                name=f"{order_name}/{regime}",
                variant=variant,
                cfg=_variant(cfg, layout={"order": [str(s) for s in order]}, stages=_stages(cfg, names)),
            ))
    return runs


def _lambda_plan(cfg: ExperimentConfig) -> list[PlannedRun]:
    return [
        PlannedRun(
            name=f"lambda_plan={value}",
            variant={"lambda_plan": value},
            cfg=_variant(cfg, stages=_stages(cfg, [s.stage for s in cfg.stages] or PIPELINE, lambda_plan=value)),
        )
        for value in LAMBDA_PLAN_GRID
    ]


def _text_supervision(cfg: ExperimentConfig) -> list[PlannedRun]:
    runs = []
    for text_loss in (True, False):
        for regime, names in (("detection-only", PIPELINE[:1]), ("end-to-end", PIPELINE)):
            runs.append(PlannedRun(
                name=f"text={'on' if text_loss else 'off'}/{regime}",
                variant={"text_loss": text_loss, "regime": regime},
                cfg=_variant(cfg, stages=_stages(cfg, names, text_loss=text_loss)),
            ))
    return runs


def _transfer_policy(cfg: ExperimentConfig) -> list[PlannedRun]:
    runs = []
    for k in range(TRANSFER_SEEDS):
        seed = cfg.seed + k
        for policy in ALL_POLICIES:
            runs.append(PlannedRun(
                name=f"{policy.label}/seed={seed}",
                variant={"attn": str(policy.attn), "ffn": str(policy.ffn)},
                cfg=_variant(
                    cfg,
                    seed=seed,
                    transfer={"use_pretrained": True, "attn": str(policy.attn), "ffn": str(policy.ffn)},
                    stages=_stages(cfg, PIPELINE[:1], seed=seed),
                ),
                policy=policy,
            ))
    return runs


def _stage_wise(cfg: ExperimentConfig) -> list[PlannedRun]:
    grid = (
        ("plan-adapt-only", (StageName.PLAN_ADAPT,)),
        ("pretrain+adapt", PIPELINE[:2]),
        ("three-stage", PIPELINE),
    )
    return [
        PlannedRun(name=name, variant={"stages": [str(s) for s in names]}, cfg=_variant(cfg, stages=_stages(cfg, names)))
        for name, names in grid
    ]


PRESETS: dict[str, Callable[[ExperimentConfig], list[PlannedRun]]] = {
    "token-order": _token_order,
    "lambda-plan": _lambda_plan,
    "text-supervision": _text_supervision,
    "transfer-policy": _transfer_policy,
    "stage-wise": _stage_wise,
}


def plan_ablation(preset: str, cfg: ExperimentConfig) -> list[PlannedRun]:
    try:
        builder = PRESETS[preset]
    except KeyError:
        raise ConfigError(f"unknown ablation preset {preset!r}; valid presets: {', '.join(PRESETS)}") from None
    return builder(cfg)


# --- Execution ---


@torch.no_grad()
def perception_val_loss(cfg: ExperimentConfig, outcome: TrainOutcome) -> float:
    val = prepare(cfg, load_scenes(cfg, "val"), outcome.vocab, outcome.model.plan_anchors.cpu().numpy())
    outcome.model.eval()
    losses = compute_components(
        outcome.model, val.batch, val.targets, StageName.PRETRAIN_PERC_LANG, cfg.loss, use_text=False,
    )
    return float(losses.components["perc"])


def _execute(run: PlannedRun, run_dir: Path, source: CheckpointBundle | None, preset: str) -> AblationRun:
    record = AblationRun(name=run.name, variant=run.variant, seed=run.cfg.seed, run_dir=str(run_dir))
    try:
        outcome = train_pipeline(run.cfg, run_dir, source=source, policy=run.policy)
    except TrainingDivergedError as exc:
        log.error("Ablation run %s diverged at step %d", run.name, exc.step)
        return record.model_copy(update={"status": "diverged"})
    result = evaluate_split(run.cfg, outcome.model, "val", with_text=False)
    update = {
        "status": "done",
        "stage_losses": outcome.stage_losses,
        "plan_metrics": result.plan,
        "det_metrics": result.det,
    }
    if preset == "transfer-policy":
        update["perception_val_loss"] = perception_val_loss(run.cfg, outcome)
    return record.model_copy(update=update)


def _transfer_summary(runs: list[AblationRun]) -> dict:
    """Per seed: does pretrained attention beat fully random init on perception validation loss?"""
    by_seed: dict[int, dict[tuple[str, str], float]] = {}
    for r in runs:
        if r.perception_val_loss is not None:
            by_seed.setdefault(r.seed, {})[(r.variant["attn"], r.variant["ffn"])] = r.perception_val_loss
    pre, rand = str(WeightSource.PRETRAINED), str(WeightSource.RANDOM)
    wins = sum(
        1 for losses in by_seed.values()
        if (pre, rand) in losses and (rand, rand) in losses and losses[(pre, rand)] < losses[(rand, rand)]
    )
    return {"seeds": len(by_seed), "pretrained_attn_wins": wins, "majority": wins * 2 > len(by_seed)}


def _summary(preset: str, runs: list[AblationRun]) -> dict:
    if preset == "transfer-policy":
        return _transfer_summary(runs)
    done = [r for r in runs if r.plan_metrics is not None and math.isfinite(r.plan_metrics.l2_avg)]
    if not done:
        return {"best_l2_run": None}
    best = min(done, key=lambda r: r.plan_metrics.l2_avg)
    return {"best_l2_run": best.name, "best_l2_avg": best.plan_metrics.l2_avg}


def cmd_ablate(cfg: ExperimentConfig, preset: str, dry_run: bool = False) -> AblationReport:
    started = time.perf_counter()
    planned = plan_ablation(preset, cfg)
    log.info("Ablation %s: %d runs planned", preset, len(planned))
    for i, run in enumerate(planned):
        log.info("  %02d %s", i, run.name)
    run_dir = new_run_dir(cfg, f"ablate-{preset}")
    records = [AblationRun(name=r.name, variant=r.variant, seed=r.cfg.seed) for r in planned]

    if not dry_run:
        source = None
        if cfg.transfer.use_pretrained or preset == "transfer-policy":
            if cfg.transfer.source is not None:
                source = load_bundle(cfg.transfer.source)
            else:
                source, _ = pretrain_source(cfg, run_dir / "source")
        records = [
            _execute(run, run_dir / f"{i:02d}", source, preset) for i, run in enumerate(planned)
        ]

    report = AblationReport(
        preset=preset,
        n_runs=len(planned),
        config=cfg.model_dump(mode="json"),
        runs=records,
        summary={} if dry_run else _summary(preset, records),
        runtime_s=time.perf_counter() - started,
    )
    write_report(run_dir / "ablation.json", report)
    log.info("Ablation %s finished in %.1fs; report in %s", preset, report.runtime_s, run_dir)
    return report
