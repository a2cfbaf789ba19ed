from __future__ import annotations

import logging
import time
from pathlib import Path

from app.decoder import DecoderModel
from app.errors import ConfigError
from app.evaluation import EvaluationResult, evaluate_model
from app.jobs.runs import check_compatible, default_vocab, load_scenes, new_run_dir, prepare, setup_torch
from app.models import ExperimentConfig, ExperimentReport
from app.storage import write_report
from app.training import load_bundle, model_from_bundle

log = logging.getLogger(__name__)


def load_decoder(cfg: ExperimentConfig, checkpoint: Path | None) -> tuple[DecoderModel, str]:
    if checkpoint is None:
        raise ConfigError("this command needs --checkpoint")
    bundle = load_bundle(checkpoint)
    check_compatible(cfg, bundle)
    return model_from_bundle(bundle), bundle.digest or ""


def evaluate_split(
    cfg: ExperimentConfig, model: DecoderModel, split: str = "test", with_text: bool = True,
) -> EvaluationResult:
    scenes = load_scenes(cfg, split)
    vocab = default_vocab()
    if len(vocab) != model.vocab_size:
        raise ConfigError(f"model vocabulary has {model.vocab_size} entries, the caption vocabulary {len(vocab)}")
    prepared = prepare(cfg, scenes, vocab, model.plan_anchors.cpu().numpy())
    return evaluate_model(model, prepared, cfg.eval, with_text=with_text)


def cmd_eval(cfg: ExperimentConfig, checkpoint: Path | None) -> ExperimentReport:
    started = time.perf_counter()
    setup_torch(cfg.seed)
    model, digest = load_decoder(cfg, checkpoint)
    result = evaluate_split(cfg, model, "test")
    report = ExperimentReport(
        config=cfg.model_dump(mode="json"),
        plan_metrics=result.plan,
        det_metrics=result.det,
        text_metrics=result.text,
        checkpoints={Path(checkpoint).name: digest},
        runtime_s=time.perf_counter() - started,
    )
    run_dir = new_run_dir(cfg, "eval")
    write_report(run_dir / "report.json", report)
    log.info("Evaluation report written to %s", run_dir)
    return report
