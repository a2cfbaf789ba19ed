from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import torch

from app.heads import SceneTargets, build_targets
from app.models import WorldConfig
from app.scene import SceneSample
from app.tokens import SequenceBatch, SequenceLayout, Vocab, collate, sequences_for

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreparedSplit:
    """A whole split collated once; minibatches are index selections."""

    scenes: list[SceneSample]
    batch: SequenceBatch
    targets: SceneTargets

    def __len__(self) -> int:
        return len(self.scenes)

    def select(self, index: Sequence[int] | torch.Tensor) -> tuple[SequenceBatch, SceneTargets]:
        return self.batch.select(index), self.targets.select(index)

    def to(self, dtype: torch.dtype) -> PreparedSplit:
        return PreparedSplit(scenes=self.scenes, batch=self.batch.to(dtype), targets=self.targets.to(dtype))


def prepare_split(
    scenes: Sequence[SceneSample],
    world: WorldConfig,
    layout: SequenceLayout,
    vocab: Vocab,
    anchors: np.ndarray,
    dtype: torch.dtype = torch.float32,
) -> PreparedSplit:
    scenes = list(scenes)
    batch = collate(sequences_for(scenes, world, layout, vocab, anchors), dtype=dtype)
    targets = build_targets(scenes, world.world_extent, world.lane_points, dtype=dtype)
    log.debug("Prepared %d scenes (sequence length %d)", len(scenes), layout.total_length)
    return PreparedSplit(scenes=scenes, batch=batch, targets=targets)
