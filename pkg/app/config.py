from __future__ import annotations

from pathlib import Path

import yaml
from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.errors import ConfigError
from app.models import ExperimentConfig


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="KITSUNE_DRIVE_")

    log_level: str = "INFO"
    output_dir: Path = Path("runs")
    torch_threads: int | None = None


settings = Settings()


def load_config(path: Path | str, **overrides) -> ExperimentConfig:
    """Read an experiment YAML file, apply top-level overrides and validate."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"Malformed YAML in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"Config {path} must be a mapping at the top level")
    raw.setdefault("output_dir", str(settings.output_dir))
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return parse_config(raw)


def parse_config(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize the fully resolved config (defaults expanded) as YAML."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)


def config_from_yaml(text: str) -> ExperimentConfig:
    return parse_config(yaml.safe_load(text) or {})
