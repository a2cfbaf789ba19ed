from __future__ import annotations

import logging
from pathlib import Path

from app.jobs.runs import SPLITS, split_path
from app.models import ExperimentConfig
from app.scene import build_split

log = logging.getLogger(__name__)


def cmd_gen_data(cfg: ExperimentConfig, splits: tuple[str, ...] = SPLITS) -> dict[str, Path]:
    """Write every split; seed ranges are checked disjoint when the config is validated."""
    seeds = cfg.data.split_seeds()
    paths = {}
    for split in splits:
        base_seed, n = seeds[split]
        paths[split] = build_split(n, base_seed, cfg.world, split_path(cfg, split))
    log.info("Generated %d splits under %s", len(paths), cfg.output_dir / "data")
    return paths
