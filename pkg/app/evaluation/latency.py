"""FULL vs TRUNCATED forward timing and the truncation-equivalence check."""
from __future__ import annotations

import logging
import statistics
import time

import torch

from app.decoder import DecoderModel
from app.errors import ConfigError
from app.models import MIN_BENCH_RUNS, MIN_BENCH_WARMUP, BenchConfig, ForwardMode, LatencyComparison, LatencyReport
from app.tokens import SequenceBatch

log = logging.getLogger(__name__)


def latency_bench(
    model: DecoderModel,
    batch: SequenceBatch,
    mode: ForwardMode,
    n_runs: int,
    warmup: int = 10,
    threads: int = 1,
) -> LatencyReport:
    """Median wall time of one forward after ``warmup`` discarded runs, on ``threads`` workers."""
    if n_runs < MIN_BENCH_RUNS:
        raise ConfigError(f"latency bench needs at least {MIN_BENCH_RUNS} timed runs, got {n_runs}")
    if warmup < MIN_BENCH_WARMUP:
        raise ConfigError(f"latency bench needs at least {MIN_BENCH_WARMUP} warmup runs, got {warmup}")
    previous = torch.get_num_threads()
    torch.set_num_threads(threads)
    model.eval()
    times: list[float] = []
    try:
        with torch.inference_mode():
            for _ in range(warmup):
                model(batch, mode)
            executed = 0
            for _ in range(n_runs):
                start = time.perf_counter()
                trace = model(batch, mode)
                times.append((time.perf_counter() - start) * 1000.0)
                executed = trace.layers_executed
    finally:
        torch.set_num_threads(previous)
    report = LatencyReport(
        mode=mode, n_runs=n_runs, run_ms=times, median_ms=statistics.median(times), layers_executed=executed,
    )
    log.info("%s forward: median %.3f ms over %d runs (%d layers)", mode, report.median_ms, n_runs, executed)
    return report


def compare_latency(model: DecoderModel, batch: SequenceBatch, cfg: BenchConfig = BenchConfig()) -> LatencyComparison:
    full = latency_bench(model, batch, ForwardMode.FULL, cfg.n_runs, cfg.warmup, cfg.threads)
    truncated = latency_bench(model, batch, ForwardMode.TRUNCATED, cfg.n_runs, cfg.warmup, cfg.threads)
    ratio = truncated.median_ms / full.median_ms
    truncated = truncated.model_copy(update={"ratio": ratio})
    log.info("TRUNCATED/FULL median latency ratio %.3f", ratio)
    return LatencyComparison(full=full, truncated=truncated, ratio=ratio)


@torch.no_grad()
def truncation_check(model: DecoderModel, batch: SequenceBatch, reference: DecoderModel | None = None) -> float:
    """Max |FULL - TRUNCATED| over every mixed-layer query state.

    The FULL pass runs on ``reference`` when given (e.g. a copy with perturbed
    weights), the TRUNCATED pass always on ``model``.
    """
    full = (model if reference is None else reference)(batch, ForwardMode.FULL, need_text=False).query_states()
    truncated = model(batch, ForwardMode.TRUNCATED).query_states()
    return max(float((a - b).abs().max()) if a.numel() else 0.0 for a, b in zip(full, truncated))
