from __future__ import annotations

import logging
import time
from pathlib import Path

from app.decoder import DecoderModel
from app.evaluation import compare_latency, truncation_check
from app.jobs.evaluate import load_decoder
from app.jobs.runs import default_vocab, load_scenes, new_run_dir, prepare, setup_torch
from app.models import ExperimentConfig, ExperimentReport, LatencyComparison
from app.storage import write_report
from app.tokens import SequenceLayout, compute_plan_anchors

log = logging.getLogger(__name__)


def cmd_bench(cfg: ExperimentConfig, checkpoint: Path | None = None) -> LatencyComparison:
    """FULL vs TRUNCATED latency; without a checkpoint a freshly initialized model is timed."""
    started = time.perf_counter()
    setup_torch(cfg.seed)
    scenes = load_scenes(cfg, "test")[:cfg.bench.batch_size]
    checkpoints = {}
    if checkpoint is not None:
        model, checkpoints[Path(checkpoint).name] = load_decoder(cfg, checkpoint)
    else:
        vocab = default_vocab()
        model = DecoderModel(
            cfg.model, SequenceLayout.from_config(cfg.layout, cfg.world), cfg.world, len(vocab),
            seed=cfg.seed, group_attention=cfg.layout.group_attention,
        )
        model.set_plan_anchors(compute_plan_anchors(scenes, cfg.world))
    batch = prepare(cfg, scenes, default_vocab(), model.plan_anchors.cpu().numpy()).batch

    deviation = truncation_check(model, batch)
    log.info("Truncation check: max query-state deviation %.3g", deviation)
    comparison = compare_latency(model, batch, cfg.bench)
    report = ExperimentReport(
        config=cfg.model_dump(mode="json"),
        latency=comparison,
        checkpoints=checkpoints,
        runtime_s=time.perf_counter() - started,
    )
    run_dir = new_run_dir(cfg, "bench")
    write_report(run_dir / "report.json", report)
    log.info(
        "FULL %.3f ms, TRUNCATED %.3f ms, ratio %.3f (reference %.3f); report in %s",
        comparison.full.median_ms, comparison.truncated.median_ms, comparison.ratio,
        comparison.reference_ratio, run_dir,
    )
    return comparison
