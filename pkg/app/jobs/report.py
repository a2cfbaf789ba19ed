"""Static plots from a run directory: loss curves, metric bars and the latency comparison."""
from __future__ import annotations

import logging
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from pydantic import ValidationError  # noqa: E402

from app.errors import ReportError  # noqa: E402
from app.models import AblationReport, ExperimentReport  # noqa: E402
from app.storage import CURVE_SUFFIX, read_json, read_loss_curve, read_report  # noqa: E402

log = logging.getLogger(__name__)

EXPECTED_ARTIFACTS = (f"*{CURVE_SUFFIX}", "report.json", "ablation.json")


def _plot_curves(curve_paths: list[Path], out_dir: Path) -> list[Path]:
    by_prefix: dict[str, list[Path]] = defaultdict(list)
    for path in curve_paths:
        prefix, _, _ = path.name.removesuffix(CURVE_SUFFIX).rpartition(".")
        by_prefix[f"{path.parent.parent.name}-{prefix}"].append(path)
    written = []
    for prefix, paths in sorted(by_prefix.items()):
        fig, ax = plt.subplots(figsize=(6, 4))
        for path in sorted(paths):
            points = read_loss_curve(path)
            if points:
                steps, values = zip(*points)
                ax.plot(steps, values, label=path.name.removesuffix(CURVE_SUFFIX).rpartition(".")[2])
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.set_title(prefix)
        ax.legend()
        written.append(_save(fig, out_dir / f"loss-{prefix}.png"))
    return written


def _plot_report(report: ExperimentReport, name: str, out_dir: Path) -> list[Path]:
    written = []
    plan = report.plan_metrics
    if plan is not None:
        fig, (ax_l2, ax_col) = plt.subplots(1, 2, figsize=(8, 3.5))
        labels = [f"t={h + 1}" for h in plan.horizons] + ["avg"]
        ax_l2.bar(labels, plan.l2_per_horizon + [plan.l2_avg])
        ax_l2.set_title("L2 (world units)")
        if plan.collision_per_horizon:
            ax_col.bar(labels, plan.collision_per_horizon + [plan.collision_avg])
        ax_col.set_title("collision rate")
        written.append(_save(fig, out_dir / f"plan-{name}.png"))
    if report.det_metrics is not None:
        det = report.det_metrics
        fig, ax = plt.subplots(figsize=(4, 3.5))
        ax.bar(["precision", "recall", "AP"], [det.precision, det.recall, det.ap])
        ax.set_ylim(0, 1)
        ax.set_title("detection")
        written.append(_save(fig, out_dir / f"det-{name}.png"))
    if report.latency is not None:
        lat = report.latency
        fig, ax = plt.subplots(figsize=(4, 3.5))
        ax.bar(["FULL", "TRUNCATED"], [lat.full.median_ms, lat.truncated.median_ms])
        ax.set_ylabel("median ms")
        ax.set_title(f"ratio {lat.ratio:.2f} (reference {lat.reference_ratio:.2f})")
        written.append(_save(fig, out_dir / f"latency-{name}.png"))
    return written


def _plot_ablation(report: AblationReport, name: str, out_dir: Path) -> list[Path]:
    done = [r for r in report.runs if r.plan_metrics is not None]
    if not done:
        return []
    fig, ax = plt.subplots(figsize=(max(4, 0.8 * len(done)), 4))
    ax.bar([r.name for r in done], [r.plan_metrics.l2_avg for r in done])
    ax.set_ylabel("avg L2")
    ax.set_title(report.preset)
    ax.tick_params(axis="x", labelrotation=60)
    return [_save(fig, out_dir / f"ablation-{name}.png")]


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def cmd_report(directory: Path) -> list[Path]:
    directory = Path(directory)
    curves = sorted(directory.rglob(f"*{CURVE_SUFFIX}"))
    reports = sorted(directory.rglob("report.json"))
    ablations = sorted(directory.rglob("ablation.json"))
    if not (curves or reports or ablations):
        raise ReportError(f"nothing to plot in {directory}; expected any of: {', '.join(EXPECTED_ARTIFACTS)}")

    out_dir = directory / "plots"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = _plot_curves(curves, out_dir)
    for path in reports:
        written += _plot_report(read_report(path), path.parent.name, out_dir)
    for path in ablations:
        try:
            ablation = AblationReport.model_validate(read_json(path))
        except ValidationError as exc:
            raise ReportError(f"{path} is not a valid ablation report: {exc}") from exc
        written += _plot_ablation(ablation, path.parent.name, out_dir)
    log.info("Wrote %d plots to %s", len(written), out_dir)
    return written
