from __future__ import annotations

from collections.abc import Iterable
from pathlib import Path

from pydantic import ValidationError

from app.errors import DatasetIOError
from app.models import SceneRecord


def write_scene_records(path: Path, records: Iterable[SceneRecord]) -> None:
    """Write one JSON record per line; identical records give identical bytes."""
    lines = [r.model_dump_json() for r in records]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    except OSError as exc:
        raise DatasetIOError(f"Failed to write dataset {path}: {exc}") from exc


def read_scene_records(path: Path) -> list[SceneRecord]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetIOError(f"Failed to read dataset {path}: {exc}") from exc
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(SceneRecord.model_validate_json(line))
        except ValidationError as exc:
            raise DatasetIOError(f"{path}:{lineno}: malformed record: {exc}") from exc
    return records
