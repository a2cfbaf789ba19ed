"""Rotary position encoding and the additive 2D reference-point embedding."""
from __future__ import annotations

import torch
from torch import nn

from app.errors import ContractViolation
from app.models import E3DMode


def rotary_apply(x: torch.Tensor, pos: torch.Tensor, base: float = 10000.0) -> torch.Tensor:
    """Rotate each consecutive feature pair of ``x`` (..., L, d_head) by pos * base^(-2k/d_head)."""
    d = x.shape[-1]
    if d % 2:
        raise ContractViolation(f"rotary encoding needs an even head size, got {d}")
    freqs = base ** (-torch.arange(0, d, 2, dtype=x.dtype, device=x.device) / d)
    angles = pos.to(x.dtype)[:, None] * freqs
    cos, sin = angles.cos(), angles.sin()
    x1, x2 = x[..., 0::2], x[..., 1::2]
    return torch.stack([x1 * cos - x2 * sin, x1 * sin + x2 * cos], dim=-1).flatten(-2)


def e3d_embed(
    ref_points: torch.Tensor, d_head: int, scale: float = 1.0, temperature: float = 100.0,
) -> torch.Tensor:
    """Sinusoidal embedding of (..., 2) world points into (..., d_head).

    The first half of the output encodes x / scale, the second half y / scale,
    each as interleaved [sin, cos] pairs over frequencies temperature^(-k/n),
    so the first frequency is 1.
    """
    if d_head % 4:
        raise ContractViolation(f"the 3D embedding needs d_head divisible by 4, got {d_head}")
    if torch.isnan(ref_points).any():
        raise ContractViolation("3D embedding requested for a token without a reference point")
    n_freq = d_head // 4
    omega = temperature ** (-torch.arange(n_freq, dtype=ref_points.dtype, device=ref_points.device) / n_freq)
    halves = []
    for axis in range(2):
        phase = (ref_points[..., axis:axis + 1] / scale) * omega
        halves.append(torch.stack([phase.sin(), phase.cos()], dim=-1).flatten(-2))
    return torch.cat(halves, dim=-1)


class E3DEncoder(nn.Module):
    """Reference-point embedding shared by all layers; optionally refined by a small MLP."""

    def __init__(self, d_head: int, scale: float, temperature: float, mode: E3DMode) -> None:
        super().__init__()
        self.d_head = d_head
        self.scale = scale
        self.temperature = temperature
        self.mode = mode
        self.mlp = None
        if mode is E3DMode.LEARNED:
            self.mlp = nn.Sequential(
                nn.Linear(d_head, 2 * d_head),
                nn.GELU(),
                nn.Linear(2 * d_head, d_head),
            )

    def forward(self, ref_points: torch.Tensor) -> torch.Tensor:
        emb = e3d_embed(ref_points, self.d_head, self.scale, self.temperature)
        return emb if self.mlp is None else self.mlp(emb)
