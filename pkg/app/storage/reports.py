from __future__ import annotations

import json
from pathlib import Path

from pydantic import BaseModel, ValidationError

from app.errors import ReportError
from app.models import ExperimentReport


def write_report(path: Path, report: BaseModel) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"Failed to write report {path}: {exc}") from exc
    return path


def read_report(path: Path) -> ExperimentReport:
    try:
        return ExperimentReport.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ReportError(f"Failed to read report {path}: {exc}") from exc
    except ValidationError as exc:
        raise ReportError(f"{path} is not a valid experiment report: {exc}") from exc


def read_json(path: Path) -> dict | list:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportError(f"Failed to read {path}: {exc}") from exc
