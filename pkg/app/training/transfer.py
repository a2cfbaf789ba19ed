"""Initialize a decoder from a pretrained toy VLM under an attention/FFN transfer policy."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from app.decoder import DecoderModel
from app.errors import ConfigError
from app.models import DecoderConfig, LayoutConfig, TransferConfig, WeightSource, WorldConfig
from app.tokens import SequenceLayout
from app.training.checkpoint import CheckpointBundle

log = logging.getLogger(__name__)

ALWAYS_COPIED = ("raster_embed.", "token_embed.", "final_norm.")


@dataclass(frozen=True)
class TransferPolicy:
    """Which backbone blocks start from the pretrained source.

    The raster embedding, token embedding and final norm are copied under every
    policy, including RANDOM/RANDOM: they play the role of the pretrained image
    encoder and text embedding, so the policies differ only in the attention and
    FFN blocks.
    """

    attn: WeightSource = WeightSource.PRETRAINED
    ffn: WeightSource = WeightSource.RANDOM

    @classmethod
    def from_config(cls, cfg: TransferConfig) -> TransferPolicy:
        return cls(attn=cfg.attn, ffn=cfg.ffn)

    @property
    def label(self) -> str:
        def mark(source: WeightSource) -> str:
            return "pre" if source is WeightSource.PRETRAINED else "rand"

        return f"attn={mark(self.attn)},ffn={mark(self.ffn)}"


ALL_POLICIES: tuple[TransferPolicy, ...] = tuple(
    TransferPolicy(attn, ffn) for attn in WeightSource for ffn in WeightSource
)


def _check_compatible(source: CheckpointBundle, cfg: DecoderConfig, world: WorldConfig, vocab_size: int) -> None:
    src = source.decoder
    problems = [
        f"{name}: source {getattr(src, name)} != target {getattr(cfg, name)}"
        for name in ("d_model", "n_heads", "d_ffn")
        if getattr(src, name) != getattr(cfg, name)
    ]
    if src.n_layers < cfg.n_mixed:
        problems.append(f"source has {src.n_layers} layers, fewer than n_mixed={cfg.n_mixed}")
    if len(source.vocab_words) != vocab_size:
        problems.append(f"vocabulary size: source {len(source.vocab_words)} != target {vocab_size}")
    if source.world.grid_channels != world.grid_channels:
        problems.append("grid channel count differs")
    if problems:
        raise ConfigError("pretrained source is incompatible: " + "; ".join(problems))


def _copied(name: str, policy: TransferPolicy, n_source_layers: int) -> bool:
    if name.startswith(ALWAYS_COPIED):
        return True
    parts = name.split(".")
    if parts[0] != "layers" or int(parts[1]) >= n_source_layers:
        return False
    block = parts[2]
    if block in ("attn", "attn_norm"):
        return policy.attn is WeightSource.PRETRAINED
    if block in ("ffn", "ffn_norm"):
        return policy.ffn is WeightSource.PRETRAINED
    return False


def init_from_pretrained(
    source: CheckpointBundle,
    policy: TransferPolicy,
    cfg: DecoderConfig,
    world: WorldConfig,
    layout: LayoutConfig,
    seed: int = 0,
    dtype: torch.dtype = torch.float32,
) -> DecoderModel:
    """Fresh decoder whose attention and/or text FFNs are copied from ``source`` per ``policy``.

    Group attention, task FFNs, heads, queries and the 3D embedding have no
    pretrained counterpart and stay freshly initialized.
    """
    _check_compatible(source, cfg, world, len(source.vocab_words))
    model = DecoderModel(
        cfg, SequenceLayout.from_config(layout, world), world, len(source.vocab_words),
        seed=seed, group_attention=layout.group_attention,
    ).to(dtype)
    n_source = source.decoder.n_layers
    copied = 0
    with torch.no_grad():
        for name, param in model.named_parameters():
            if _copied(name, policy, n_source):
                param.copy_(torch.from_numpy(np.array(source.state[name])))
                copied += 1
    log.info("Initialized decoder from pretrained source (%s): %d tensors copied", policy.label, copied)
    return model
