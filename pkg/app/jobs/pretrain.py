from __future__ import annotations

import logging
import time
from pathlib import Path

from app.jobs.runs import default_vocab, load_scenes, new_run_dir, prepare, setup_torch
from app.models import ExperimentConfig, ExperimentReport
from app.storage import write_loss_curves, write_report
from app.tokens import compute_plan_anchors
from app.training import CheckpointBundle, pretrain_toy_vlm, save_bundle

log = logging.getLogger(__name__)

TOY_VLM_NAME = "toy_vlm"


def pretrain_source(cfg: ExperimentConfig, run_dir: Path) -> tuple[CheckpointBundle, dict[str, float]]:
    """Pretrain the toy VLM on the train-split captions and save it under ``run_dir``."""
    setup_torch(cfg.pretrain.seed)
    scenes = load_scenes(cfg, "train")
    vocab = default_vocab()
    split = prepare(cfg, scenes, vocab, compute_plan_anchors(scenes, cfg.world))
    result = pretrain_toy_vlm(split, vocab, cfg.pretrain, cfg.model, cfg.world, cfg.layout)
    save_bundle(result.bundle, run_dir / "checkpoints" / TOY_VLM_NAME)
    write_loss_curves(run_dir / "curves", TOY_VLM_NAME, result.curves)
    return result.bundle, result.final


def cmd_pretrain(cfg: ExperimentConfig) -> ExperimentReport:
    started = time.perf_counter()
    run_dir = new_run_dir(cfg, "pretrain")
    bundle, final = pretrain_source(cfg, run_dir)
    report = ExperimentReport(
        config=cfg.model_dump(mode="json"),
        stage_losses={TOY_VLM_NAME: final},
        checkpoints={TOY_VLM_NAME: bundle.digest},
        runtime_s=time.perf_counter() - started,
    )
    write_report(run_dir / "report.json", report)
    log.info("Pretraining finished in %.1fs; outputs in %s", report.runtime_s, run_dir)
    return report
