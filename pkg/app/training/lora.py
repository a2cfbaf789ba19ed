from __future__ import annotations

import logging
import math

import torch
import torch.nn.functional as F
from torch import nn

from app.decoder import DecoderModel, MultiHeadAttention
from app.errors import ConfigError, ContractViolation
from app.models import LoraSpec

log = logging.getLogger(__name__)


class LoRALinear(nn.Module):
    """y = W x + (alpha / r) * B A x, with B zero-initialized."""

    def __init__(self, base: nn.Linear, rank: int, alpha: float) -> None:
        super().__init__()
        self.base = base
        self.rank = rank
        self.scaling = alpha / rank
        weight = base.weight
        self.lora_a = nn.Parameter(torch.empty(rank, base.in_features, dtype=weight.dtype, device=weight.device))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank, dtype=weight.dtype, device=weight.device))
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.scaling * F.linear(F.linear(x, self.lora_a), self.lora_b)

    def merged(self) -> nn.Linear:
        weight = self.base.weight
        out = nn.Linear(self.base.in_features, self.base.out_features, bias=self.base.bias is not None)
        out = out.to(dtype=weight.dtype, device=weight.device)
        with torch.no_grad():
            out.weight.copy_(weight + self.scaling * (self.lora_b @ self.lora_a))
            if self.base.bias is not None:
                out.bias.copy_(self.base.bias)
        out.weight.requires_grad_(weight.requires_grad)
        return out


def lora_layer_indices(model: DecoderModel, spec: LoraSpec) -> list[int]:
    n_layers, n_mixed = model.cfg.n_layers, model.cfg.n_mixed
    return {
        "deep": list(range(n_mixed, n_layers)),
        "mixed": list(range(n_mixed)),
        "all": list(range(n_layers)),
    }[spec.layers]


def apply_lora(model: DecoderModel, spec: LoraSpec, seed: int = 0) -> list[str]:
    """Wrap the target projections of the designated layers; returns the wrapped module names."""
    if spec.rank > model.cfg.d_model:
        raise ConfigError(f"LoRA rank {spec.rank} exceeds d_model={model.cfg.d_model}")
    wrapped = []
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        for i in lora_layer_indices(model, spec):
            attn = model.layers[i].attn
            for target in spec.targets:
                linear = getattr(attn, target)
                if isinstance(linear, LoRALinear):
                    raise ContractViolation(f"layers.{i}.attn.{target} already carries an adapter")
                setattr(attn, target, LoRALinear(linear, spec.rank, spec.alpha))
                wrapped.append(f"layers.{i}.attn.{target}")
    if not wrapped:
        log.warning("LoRA spec %s selects no layers in this model", spec.layers)
    else:
        log.info("Applied rank-%d LoRA to %d projections", spec.rank, len(wrapped))
    return wrapped


def merge_lora(model: nn.Module) -> int:
    """Fold every adapter into its base weight and drop the adapter modules."""
    merged = 0
    for module in model.modules():
        if not isinstance(module, MultiHeadAttention):
            continue
        for name in ("w_q", "w_k", "w_v", "w_o"):
            linear = getattr(module, name)
            if isinstance(linear, LoRALinear):
                setattr(module, name, linear.merged())
                merged += 1
    return merged


def has_lora(model: nn.Module) -> bool:
    return any(isinstance(m, LoRALinear) for m in model.modules())
