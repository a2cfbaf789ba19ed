"""The stage loop shared by every training stage and the toy-VLM pretraining."""
from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import torch
from torch import nn

from app.decoder import DecoderModel
from app.errors import ConfigError, TrainingDivergedError
from app.models import LayoutConfig, LossConfig, StageConfig
from app.tokens import Vocab
from app.training.checkpoint import CheckpointBundle, bundle_from_model
from app.training.data import PreparedSplit
from app.training.groups import STAGE_TRAINABLE, set_trainable
from app.training.lora import apply_lora, merge_lora
from app.training.objective import compute_components, total_loss

log = logging.getLogger(__name__)


def lr_lambda(total_steps: int, warmup_frac: float) -> Callable[[int], float]:
    """Linear warmup then cosine decay to zero, as a multiplier of the base rate."""
    warmup = int(total_steps * warmup_frac)

    def factor(step: int) -> float:
        if step < warmup:
            return (step + 1) / warmup
        progress = (step - warmup) / max(1, total_steps - warmup)
        return 0.5 * (1.0 + math.cos(math.pi * min(1.0, progress)))

    return factor


def make_optimizer(
    params: list[nn.Parameter], lr: float, weight_decay: float, steps: int, warmup_frac: float,
) -> tuple[torch.optim.Optimizer, torch.optim.lr_scheduler.LRScheduler]:
    optimizer = torch.optim.AdamW(params, lr=lr, weight_decay=weight_decay)
    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lr_lambda(steps, warmup_frac))
    return optimizer, scheduler


def minibatch_indices(generator: torch.Generator, n: int, batch_size: int) -> torch.Tensor:
    if batch_size >= n:
        return torch.arange(n)
    return torch.randperm(n, generator=generator)[:batch_size]


@dataclass
class StageResult:
    bundle: CheckpointBundle
    curves: dict[str, list[tuple[int, float]]]  # component -> (step, value)
    final: dict[str, float]


def run_stage(
    stage: StageConfig,
    model: DecoderModel,
    train: PreparedSplit,
    vocab: Vocab,
    layout: LayoutConfig,
    loss_cfg: LossConfig = LossConfig(),
) -> StageResult:
    """Optimize the stage's trainable groups; LoRA adapters are merged before returning.

    On every exit, including divergence, LoRA is merged and all parameters are
    trainable again.
    """
    if len(train) == 0:
        raise ConfigError("training split is empty")
    if stage.lora is not None:
        apply_lora(model, stage.lora, seed=stage.seed)
    try:
        return _train_stage(stage, model, train, vocab, layout, loss_cfg)
    finally:
        merge_lora(model)
        for param in model.parameters():
            param.requires_grad_(True)


def _train_stage(
    stage: StageConfig,
    model: DecoderModel,
    train: PreparedSplit,
    vocab: Vocab,
    layout: LayoutConfig,
    loss_cfg: LossConfig,
) -> StageResult:
    groups = stage.trainable if stage.trainable is not None else STAGE_TRAINABLE[stage.stage]
    params = set_trainable(model, groups, model.cfg.n_mixed)
    if not params:
        raise ConfigError(f"{stage.stage}: no trainable parameters in groups {sorted(groups)}")

    optimizer, scheduler = make_optimizer(params, stage.lr, stage.weight_decay, stage.steps, stage.warmup_frac)
    generator = torch.Generator().manual_seed(stage.seed)
    curves: dict[str, list[tuple[int, float]]] = {}
    final: dict[str, float] = {}
    log.info(
        "Stage %s: %d steps, %d trainable tensors, groups %s",
        stage.stage, stage.steps, len(params), ",".join(sorted(groups)),
    )

    model.train()
    for step in range(stage.steps):
        batch, targets = train.select(minibatch_indices(generator, len(train), stage.batch_size))
        losses = compute_components(model, batch, targets, stage.stage, loss_cfg, use_text=stage.text_loss)
        loss = total_loss(stage.stage, losses.components, stage.lambda_perc, stage.lambda_plan, stage.text_loss)
        values = losses.floats()
        values["total"] = total_loss(stage.stage, values, stage.lambda_perc, stage.lambda_plan, stage.text_loss)
        if not math.isfinite(values["total"]):
            log.error("Stage %s diverged at step %d: %s", stage.stage, step, values)
            merge_lora(model)
            bundle = bundle_from_model(model, vocab, layout, stage.stage, stage.seed, step)
            raise TrainingDivergedError(step, bundle)

        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        torch.nn.utils.clip_grad_norm_(params, stage.grad_clip)
        optimizer.step()
        scheduler.step()

        for key, value in values.items():
            curves.setdefault(key, []).append((step, value))
        final = values
        if stage.log_every and (step % stage.log_every == 0 or step == stage.steps - 1):
            log.info(
                "%s step %d: %s", stage.stage, step, " ".join(f"{k}={v:.4f}" for k, v in values.items()),
            )

    model.eval()
    merged = merge_lora(model)
    if merged:
        log.debug("Merged %d LoRA adapters", merged)
    bundle = bundle_from_model(
        model, vocab, layout, stage.stage, stage.seed, stage.steps, optimizer_state=optimizer.state_dict(),
    )
    return StageResult(bundle=bundle, curves=curves, final=final)
