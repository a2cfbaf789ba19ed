from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, fields, replace

import numpy as np
import torch

from app.errors import ContractViolation
from app.models import Segment
from app.tokens.sequence import SequenceLayout, TokenSequence


@dataclass(frozen=True)
class SequenceBatch:
    """Stacked per-token inputs of B sequences sharing one layout."""

    layout: SequenceLayout
    img_features: torch.Tensor  # (B, n_img, C)
    img_ref: torch.Tensor  # (n_img, 2)
    ego_status: torch.Tensor  # (B, EGO_STATUS_DIM)
    ego_ref: torch.Tensor  # (B, 2)
    command: torch.Tensor  # (B,)
    plan_anchor: torch.Tensor  # (B, T, 2), ego frame
    plan_ref: torch.Tensor  # (B, T, 2), world frame
    text_ids: torch.Tensor  # (B, n_text_max)

    @property
    def size(self) -> int:
        return self.img_features.shape[0]

    def select(self, index: torch.Tensor | Sequence[int]) -> SequenceBatch:
        index = torch.as_tensor(index, dtype=torch.long)
        return replace(self, **{
            f.name: getattr(self, f.name)[index]
            for f in fields(self)
            if f.name not in ("layout", "img_ref")
        })

    def to(self, dtype: torch.dtype) -> SequenceBatch:
        return replace(self, **{
            f.name: getattr(self, f.name).to(dtype)
            for f in fields(self)
            if f.name != "layout" and getattr(self, f.name).is_floating_point()
        })

    def with_text(self, text_ids: torch.Tensor) -> SequenceBatch:
        if text_ids.shape != self.text_ids.shape:
            raise ContractViolation(f"text ids must have shape {tuple(self.text_ids.shape)}")
        return replace(self, text_ids=text_ids.to(self.text_ids))


def collate(seqs: Sequence[TokenSequence], dtype: torch.dtype = torch.float32) -> SequenceBatch:
    if not seqs:
        raise ContractViolation("cannot collate an empty list of sequences")
    layout = seqs[0].layout
    if any(s.layout != layout for s in seqs):
        raise ContractViolation("all sequences in a batch must share one layout")
    spans = layout.spans

    def stack(values) -> torch.Tensor:
        return torch.as_tensor(np.stack(values), dtype=dtype)

    return SequenceBatch(
        layout=layout,
        img_features=stack([s.img_features for s in seqs]),
        img_ref=torch.as_tensor(seqs[0].ref_points[spans[Segment.IMG]], dtype=dtype),
        ego_status=stack([s.ego_status for s in seqs]),
        ego_ref=stack([s.ref_points[spans[Segment.EGO]][0] for s in seqs]),
        command=torch.as_tensor([s.command for s in seqs], dtype=torch.long),
        plan_anchor=stack([s.plan_anchor for s in seqs]),
        plan_ref=stack([s.ref_points[spans[Segment.PLAN_Q]] for s in seqs]),
        text_ids=torch.as_tensor(np.stack([s.text_ids for s in seqs]), dtype=torch.long),
    )
