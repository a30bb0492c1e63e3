"""Greedy capacitated allocation of a unit budget in score order."""

from __future__ import annotations

import numpy as np

__all__ = ["alloc_greedy"]


def alloc_greedy(scores, capacities, budget: int) -> np.ndarray:
    """Allocate up to ``budget`` units greedily by non-increasing score.

    Agents are processed in non-increasing score order (ties broken by
    ascending index); each receives ``min(capacity, remaining budget)``.
    Processing stops at the first negative score or when the budget runs out;
    zero-score agents are eligible.  For non-negative capacities this
    maximizes ``sum(scores * units)`` over integer allocations with
    ``units <= capacities`` and ``sum(units) <= budget``.
    """
    scores = np.asarray(scores, dtype=float)
    caps = np.asarray(capacities)
    if scores.ndim != 1 or caps.shape != scores.shape:
        raise ValueError("scores and capacities must be equal-length vectors")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    if not np.issubdtype(caps.dtype, np.integer):
        raise TypeError("capacities must be integers")
    if caps.size and caps.min() < 0:
        raise ValueError("capacities must be >= 0")
    budget = int(budget)
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")

    units = np.zeros(scores.size, dtype=np.int64)
    remaining = budget
    order = np.lexsort((np.arange(scores.size), -scores))
    for idx in order:
        if remaining <= 0 or scores[idx] < 0.0:
            break
        take = min(int(caps[idx]), remaining)
        units[idx] = take
        remaining -= take
    return units
