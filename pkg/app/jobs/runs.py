"""Run directories, dataset splits and torch setup shared by the CLI jobs."""
from __future__ import annotations

import logging
from datetime import datetime
from pathlib import Path

import numpy as np
import torch

from app.config import settings
from app.errors import ConfigError
from app.models import ExperimentConfig
from app.scene import TEMPLATE_WORDS, SceneSample, build_split, load_split
from app.tokens import SequenceLayout, Vocab, build_vocab
from app.training import CheckpointBundle, PreparedSplit, prepare_split

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


def new_run_dir(cfg: ExperimentConfig, command: str) -> Path:
    """A fresh timestamped directory; reruns never overwrite earlier runs."""
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    path = cfg.output_dir / f"{command}-{stamp}"
    path.mkdir(parents=True, exist_ok=False)
    return path


def split_path(cfg: ExperimentConfig, split: str) -> Path:
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}; expected one of {', '.join(SPLITS)}")
    return cfg.output_dir / "data" / f"{split}.jsonl"


def ensure_split(cfg: ExperimentConfig, split: str) -> Path:
    path = split_path(cfg, split)
    if not path.exists():
        base_seed, n = cfg.data.split_seeds()[split]
        log.info("No %s split at %s; generating %d scenes", split, path, n)
        build_split(n, base_seed, cfg.world, path)
    return path


def load_scenes(cfg: ExperimentConfig, split: str) -> list[SceneSample]:
    scenes = load_split(ensure_split(cfg, split))
    base_seed, n = cfg.data.split_seeds()[split]
    if len(scenes) != n or scenes[0].seed != base_seed:
        log.warning("%s split on disk (%d scenes from seed %d) differs from the config", split, len(scenes), scenes[0].seed)
    return scenes


def default_vocab() -> Vocab:
    return build_vocab(TEMPLATE_WORDS)


def prepare(
    cfg: ExperimentConfig, scenes: list[SceneSample], vocab: Vocab, anchors: np.ndarray,
    dtype: torch.dtype = torch.float32,
) -> PreparedSplit:
    layout = SequenceLayout.from_config(cfg.layout, cfg.world)
    return prepare_split(scenes, cfg.world, layout, vocab, anchors, dtype)


def setup_torch(seed: int) -> None:
    if settings.torch_threads:
        torch.set_num_threads(settings.torch_threads)
    torch.manual_seed(seed)


def check_compatible(cfg: ExperimentConfig, bundle: CheckpointBundle) -> None:
    if bundle.kind != "decoder":
        raise ConfigError(f"expected a decoder checkpoint, got {bundle.kind}")
    mismatched = [
        name for name, ours, theirs in (
            ("model", cfg.model, bundle.decoder),
            ("world", cfg.world, bundle.world),
            ("layout", cfg.layout, bundle.layout),
        )
        if ours != theirs
    ]
    if mismatched:
        raise ConfigError(f"checkpoint was trained with a different {', '.join(mismatched)} config")
