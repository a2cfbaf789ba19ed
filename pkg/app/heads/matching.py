from __future__ import annotations

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

from app.errors import MatchingError


def hungarian_match(cost: np.ndarray | torch.Tensor) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment of size min(N_pred, N_gt), sorted by pred index."""
    if isinstance(cost, torch.Tensor):
        cost = cost.detach().cpu().numpy()
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise MatchingError(f"cost matrix must be 2-D, got shape {cost.shape}")
    if cost.size == 0:
        return []
    if not np.isfinite(cost).all():
        raise MatchingError("cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def assignment_cost(cost: np.ndarray, pairs: list[tuple[int, int]]) -> float:
    return float(sum(cost[r, c] for r, c in pairs))
