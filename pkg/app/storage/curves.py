from __future__ import annotations

from collections.abc import Mapping, Sequence
from pathlib import Path

from app.errors import ReportError

CURVE_SUFFIX = ".curve.txt"


def write_loss_curves(
    directory: Path, prefix: str, curves: Mapping[str, Sequence[tuple[int, float]]],
) -> list[Path]:
    """One two-column ``step value`` file per loss component."""
    paths = []
    try:
        directory.mkdir(parents=True, exist_ok=True)
        for component, points in curves.items():
            path = directory / f"{prefix}.{component}{CURVE_SUFFIX}"
            path.write_text("".join(f"{step} {value!r}\n" for step, value in points), encoding="utf-8")
            paths.append(path)
    except OSError as exc:
        raise ReportError(f"Failed to write loss curves to {directory}: {exc}") from exc
    return paths


def read_loss_curve(path: Path) -> list[tuple[int, float]]:
    points = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ReportError(f"Failed to read loss curve {path}: {exc}") from exc
    for line in lines:
        if line.strip():
            step, value = line.split()
            points.append((int(step), float(value)))
    return points
