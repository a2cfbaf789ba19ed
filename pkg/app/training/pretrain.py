from __future__ import annotations

import logging
import math

import torch

from app.decoder import ToyVLM
from app.errors import ConfigError, TrainingDivergedError
from app.heads import lm_loss
from app.models import DecoderConfig, LayoutConfig, PretrainConfig, WorldConfig
from app.tokens import Vocab
from app.training.checkpoint import bundle_from_model
from app.training.data import PreparedSplit
from app.training.loop import StageResult, make_optimizer, minibatch_indices

log = logging.getLogger(__name__)

PRETRAIN_WARMUP_FRAC = 0.05
PRETRAIN_WEIGHT_DECAY = 0.01
PRETRAIN_GRAD_CLIP = 1.0


def pretrain_toy_vlm(
    split: PreparedSplit,
    vocab: Vocab,
    cfg: PretrainConfig,
    decoder: DecoderConfig,
    world: WorldConfig,
    layout: LayoutConfig,
) -> StageResult:
    """Next-word prediction over [IMG tokens; caption] with a plain causal decoder."""
    if len(split) == 0:
        raise ConfigError("pretraining needs a non-empty caption corpus")
    model = ToyVLM(decoder, world, len(vocab), layout.n_text_max, seed=cfg.seed)
    model = model.to(split.batch.img_features.dtype)
    params = list(model.parameters())
    optimizer, scheduler = make_optimizer(params, cfg.lr, PRETRAIN_WEIGHT_DECAY, cfg.steps, PRETRAIN_WARMUP_FRAC)
    generator = torch.Generator().manual_seed(cfg.seed)
    curve: list[tuple[int, float]] = []
    log.info("Pretraining toy VLM: %d captions, %d steps, vocabulary %d", len(split), cfg.steps, len(vocab))

    model.train()
    for step in range(cfg.steps):
        batch, _ = split.select(minibatch_indices(generator, len(split), cfg.batch_size))
        loss = lm_loss(model(batch), batch.text_ids)
        value = float(loss.detach())
        if not math.isfinite(value):
            log.error("Toy VLM pretraining diverged at step %d", step)
            raise TrainingDivergedError(step, bundle_from_model(model, vocab, layout, seed=cfg.seed, step=step))
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        torch.nn.utils.clip_grad_norm_(params, PRETRAIN_GRAD_CLIP)
        optimizer.step()
        scheduler.step()
        curve.append((step, value))
        if cfg.log_every and (step % cfg.log_every == 0 or step == cfg.steps - 1):
            log.info("pretrain step %d: text=%.4f", step, value)

    model.eval()
    bundle = bundle_from_model(model, vocab, layout, seed=cfg.seed, step=cfg.steps)
    final = {"text": curve[-1][1]} if curve else {}
    return StageResult(bundle=bundle, curves={"text": curve}, final=final)
