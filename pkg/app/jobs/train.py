from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from app.decoder import DecoderModel
from app.errors import ConfigError, TrainingDivergedError
from app.jobs.pretrain import pretrain_source
from app.jobs.runs import check_compatible, default_vocab, load_scenes, new_run_dir, prepare, setup_torch
from app.models import ExperimentConfig, ExperimentReport, StageConfig, StageName
from app.storage import write_loss_curves, write_report
from app.tokens import SequenceLayout, Vocab, compute_plan_anchors
from app.training import (
    CheckpointBundle,
    PreparedSplit,
    TransferPolicy,
    init_from_pretrained,
    load_bundle,
    model_from_bundle,
    run_stage,
    save_bundle,
)

log = logging.getLogger(__name__)


@dataclass
class TrainOutcome:
    model: DecoderModel
    vocab: Vocab
    train: PreparedSplit
    stage_losses: dict[str, dict[str, float]] = field(default_factory=dict)
    checkpoints: dict[str, str] = field(default_factory=dict)


def initial_model(
    cfg: ExperimentConfig,
    run_dir: Path,
    source: CheckpointBundle | None = None,
    policy: TransferPolicy | None = None,
    checkpoints: dict[str, str] | None = None,
) -> DecoderModel:
    """Fresh decoder, or one initialized from a pretrained toy VLM per the transfer config."""
    if not cfg.transfer.use_pretrained:
        layout = SequenceLayout.from_config(cfg.layout, cfg.world)
        return DecoderModel(
            cfg.model, layout, cfg.world, len(default_vocab()), seed=cfg.seed,
            group_attention=cfg.layout.group_attention,
        )
    if source is None:
        if cfg.transfer.source is not None:
            source = load_bundle(cfg.transfer.source)
        else:
            source, _ = pretrain_source(cfg, run_dir)
        if checkpoints is not None and source.digest:
            checkpoints["toy_vlm"] = source.digest
    if source.kind != "toy_vlm":
        raise ConfigError(f"transfer source must be a toy_vlm checkpoint, got {source.kind}")
    policy = policy or TransferPolicy.from_config(cfg.transfer)
    return init_from_pretrained(source, policy, cfg.model, cfg.world, cfg.layout, seed=cfg.seed)


def select_stages(cfg: ExperimentConfig, stage: str | None) -> tuple[StageConfig, ...]:
    if stage is None:
        return cfg.stages
    try:
        name = StageName(stage)
    except ValueError:
        raise ConfigError(f"unknown stage {stage!r}; expected one of {', '.join(StageName)}") from None
    chosen = tuple(s for s in cfg.stages if s.stage is name)
    if not chosen:
        raise ConfigError(f"stage {name} is not listed in the config")
    return chosen


def train_pipeline(
    cfg: ExperimentConfig,
    run_dir: Path,
    stages: tuple[StageConfig, ...] | None = None,
    start: DecoderModel | None = None,
    source: CheckpointBundle | None = None,
    policy: TransferPolicy | None = None,
) -> TrainOutcome:
    """Run the stages in order, chaining the model and saving one checkpoint per stage."""
    setup_torch(cfg.seed)
    stages = cfg.stages if stages is None else stages
    vocab = default_vocab()
    scenes = load_scenes(cfg, "train")
    anchors = compute_plan_anchors(scenes, cfg.world)
    checkpoints: dict[str, str] = {}
    model = start if start is not None else initial_model(cfg, run_dir, source, policy, checkpoints)
    if start is None:
        model.set_plan_anchors(anchors)
    train = prepare(cfg, scenes, vocab, model.plan_anchors.cpu().numpy())

    outcome = TrainOutcome(model=model, vocab=vocab, train=train, checkpoints=checkpoints)
    for i, stage in enumerate(stages):
        name = f"{i}-{stage.stage}"
        try:
            result = run_stage(stage, model, train, vocab, cfg.layout, cfg.loss)
        except TrainingDivergedError as exc:
            if exc.checkpoint is not None:
                save_bundle(exc.checkpoint, run_dir / "checkpoints" / f"{name}-diverged")
            raise
        outcome.checkpoints[name] = save_bundle(result.bundle, run_dir / "checkpoints" / name)
        write_loss_curves(run_dir / "curves", name, result.curves)
        outcome.stage_losses[name] = result.final
    return outcome


def cmd_train(cfg: ExperimentConfig, stage: str | None = None, checkpoint: Path | None = None) -> ExperimentReport:
    started = time.perf_counter()
    stages = select_stages(cfg, stage)
    run_dir = new_run_dir(cfg, "train")
    start = None
    if checkpoint is not None:
        bundle = load_bundle(checkpoint)
        check_compatible(cfg, bundle)
        start = model_from_bundle(bundle)
    outcome = train_pipeline(cfg, run_dir, stages, start=start)
    report = ExperimentReport(
        config=cfg.model_dump(mode="json"),
        stage_losses=outcome.stage_losses,
        checkpoints=outcome.checkpoints,
        runtime_s=time.perf_counter() - started,
    )
    write_report(run_dir / "report.json", report)
    log.info("Trained %d stages in %.1fs; outputs in %s", len(stages), report.runtime_s, run_dir)
    return report
