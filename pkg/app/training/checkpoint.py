from __future__ import annotations

import base64
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from pydantic import ValidationError
from torch import nn

from app.decoder import DecoderModel, ToyVLM
from app.errors import CheckpointError
from app.models import DecoderConfig, LayoutConfig, StageName, WorldConfig
from app.storage import read_checkpoint, write_checkpoint
from app.tokens import SequenceLayout, Vocab

log = logging.getLogger(__name__)

KINDS = ("decoder", "toy_vlm")


@dataclass
class CheckpointBundle:
    kind: str
    state: dict[str, np.ndarray]
    decoder: DecoderConfig
    world: WorldConfig
    layout: LayoutConfig
    vocab_words: tuple[str, ...]
    stage: StageName | None = None
    seed: int = 0
    step: int = 0
    rng_state: str | None = None
    optimizer_state: dict | None = field(default=None, repr=False)  # in memory only
    digest: str | None = None

    @property
    def vocab(self) -> Vocab:
        return Vocab(words=self.vocab_words)

    def metadata(self) -> dict:
        return {
            "kind": self.kind,
            "decoder": self.decoder.model_dump(mode="json"),
            "world": self.world.model_dump(mode="json"),
            "layout": self.layout.model_dump(mode="json"),
            "vocab": list(self.vocab_words),
            "stage": None if self.stage is None else str(self.stage),
            "seed": self.seed,
            "step": self.step,
            "rng_state": self.rng_state,
        }


def _encode_rng() -> str:
    return base64.b64encode(torch.get_rng_state().numpy().tobytes()).decode("ascii")


def bundle_from_model(
    model: DecoderModel | ToyVLM,
    vocab: Vocab,
    layout: LayoutConfig,
    stage: StageName | None = None,
    seed: int = 0,
    step: int = 0,
    optimizer_state: dict | None = None,
) -> CheckpointBundle:
    return CheckpointBundle(
        kind="toy_vlm" if isinstance(model, ToyVLM) else "decoder",
        state={k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()},
        decoder=model.cfg,
        world=model.world,
        layout=layout,
        vocab_words=vocab.words,
        stage=stage,
        seed=seed,
        step=step,
        rng_state=_encode_rng(),
        optimizer_state=optimizer_state,
    )


def save_bundle(bundle: CheckpointBundle, stem: Path | str) -> str:
    digest = write_checkpoint(stem, bundle.metadata(), bundle.state)
    bundle.digest = digest
    log.info("Saved %s checkpoint %s (%d tensors, sha256 %s)", bundle.kind, stem, len(bundle.state), digest[:12])
    return digest


def load_bundle(stem: Path | str) -> CheckpointBundle:
    file = read_checkpoint(stem)
    meta = file.metadata
    try:
        kind = meta["kind"]
        if kind not in KINDS:
            raise CheckpointError(f"{stem}: unknown checkpoint kind {kind!r}")
        return CheckpointBundle(
            kind=kind,
            state=dict(file.arrays),
            decoder=DecoderConfig.model_validate(meta["decoder"]),
            world=WorldConfig.model_validate(meta["world"]),
            layout=LayoutConfig.model_validate(meta["layout"]),
            vocab_words=tuple(meta["vocab"]),
            stage=None if meta["stage"] is None else StageName(meta["stage"]),
            seed=int(meta["seed"]),
            step=int(meta["step"]),
            rng_state=meta.get("rng_state"),
            digest=file.digest,
        )
    except (KeyError, ValueError, ValidationError) as exc:
        raise CheckpointError(f"{stem}: malformed checkpoint metadata: {exc}") from exc


def load_state(model: nn.Module, state: dict[str, np.ndarray]) -> None:
    """Strict load: every parameter and persistent buffer exactly once, shapes equal."""
    tensors = {k: torch.from_numpy(np.array(v)) for k, v in state.items()}
    try:
        model.load_state_dict(tensors, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint does not match the model: {exc}") from exc


def model_from_bundle(bundle: CheckpointBundle, dtype: torch.dtype = torch.float32) -> DecoderModel | ToyVLM:
    if bundle.kind == "toy_vlm":
        model = ToyVLM(bundle.decoder, bundle.world, len(bundle.vocab_words), bundle.layout.n_text_max, bundle.seed)
    else:
        model = DecoderModel(
            bundle.decoder,
            SequenceLayout.from_config(bundle.layout, bundle.world),
            bundle.world,
            len(bundle.vocab_words),
            seed=bundle.seed,
            group_attention=bundle.layout.group_attention,
        )
    model = model.to(dtype)
    load_state(model, bundle.state)
    return model
