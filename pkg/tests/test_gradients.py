"""Central-difference check of the full training objective in float64."""
from __future__ import annotations

import numpy as np
import pytest
import torch

from app.models import StageName
from app.training import compute_components, total_loss

N_SAMPLES = 200
H = 1e-5
RTOL = 1e-4


@pytest.mark.parametrize("use_text", [True, False])
def test_joint_gradients_match_finite_differences(model64, split64, use_text):
    batch, targets = split64.batch, split64.targets

    def objective() -> torch.Tensor:
        losses = compute_components(model64, batch, targets, StageName.JOINT, use_text=use_text)
        return total_loss(StageName.JOINT, losses.components, use_text=use_text)

    params = [p for p in model64.parameters() if p.requires_grad]
    model64.zero_grad(set_to_none=True)
    objective().backward()
    grads = [torch.zeros_like(p) if p.grad is None else p.grad.detach().clone() for p in params]

    sizes = np.array([p.numel() for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(0)
    failures = []
    with torch.no_grad():
        for flat in rng.choice(offsets[-1], size=N_SAMPLES, replace=False):
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            i = int(flat - offsets[k])
            values = params[k].data.view(-1)
            original = float(values[i])
            values[i] = original + H
            upper = float(objective())
            values[i] = original - H
            lower = float(objective())
            values[i] = original
            numeric = (upper - lower) / (2 * H)
            analytic = float(grads[k].view(-1)[i])
            if abs(analytic - numeric) > RTOL * max(abs(analytic), abs(numeric), 1e-6):
                failures.append((k, i, analytic, numeric))
    assert not failures, failures[:5]
