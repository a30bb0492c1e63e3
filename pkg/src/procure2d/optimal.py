"""Optimal auction for known qualities: greedy virtual-surplus allocation
with threshold payments.

Winners are paid a critical price per unit: the highest cost they could have
bid and still won that unit against the competition, capped at their upper
cost bound.  ``integral_payment`` recomputes the same amount through the
equivalent cost-integral form (bid cost times units, plus the integral of
the allocation over all higher cost bids) by exact summation of the step
function; the two routes agreeing is the main correctness check on the
payment rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .allocation import alloc_greedy
from .model import Bid, IrregularDistributionError, MarketConfig

__all__ = [
    "MechanismOutcome",
    "run_2d_opt",
    "integral_payment",
    "auctioneer_utility",
]


@dataclass(frozen=True)
class MechanismOutcome:
    """Allocation vector, payment vector, and the buyer's utility."""

    allocation: np.ndarray
    payments: np.ndarray
    auctioneer_utility: float


def auctioneer_utility(allocation, payments, qualities, reward_scale: float) -> float:
    """sum_i (units_i * R * q_i - payment_i)."""
    allocation = np.asarray(allocation, dtype=float)
    payments = np.asarray(payments, dtype=float)
    q = np.asarray(qualities, dtype=float)
    return float(np.dot(allocation, reward_scale * q) - payments.sum())


def _validate_instance(config: MarketConfig, qualities, bids: Sequence[Bid]) -> np.ndarray:
    q = np.asarray(qualities, dtype=float)
    n = config.n_agents
    if q.shape != (n,) or len(bids) != n:
        raise ValueError(f"expected {n} qualities and bids, got {q.shape} and {len(bids)}")
    if q.size and (q.min() < 0.0 or q.max() > 1.0):
        raise ValueError("qualities must lie in [0, 1]")
    for i, (bid, dist) in enumerate(zip(bids, config.distributions)):
        lo, hi = dist.cost_bounds
        if not lo <= bid.cost <= hi:
            raise ValueError(f"agent {i} bid cost {bid.cost} outside [{lo}, {hi}]")
        if bid.capacity > dist.cap_bounds[1]:
            raise ValueError(
                f"agent {i} bid capacity {bid.capacity} above prior upper bound"
            )
    return q


def _require_regular(config: MarketConfig, grid_resolution: int) -> None:
    for i, dist in enumerate(config.distributions):
        if not dist.check_regularity(grid_resolution):
            raise IrregularDistributionError(
                f"distribution of agent {i} is not regular; the optimality and "
                f"truthfulness guarantees are void"
            )


def _scores(config: MarketConfig, q: np.ndarray, bids: Sequence[Bid]) -> np.ndarray:
    return np.array(
        [
            dist.g_score(q[i], config.reward_scale, bids[i].cost, bids[i].capacity)
            for i, dist in enumerate(config.distributions)
        ]
    )


def run_2d_opt(
    config: MarketConfig,
    qualities,
    bids: Sequence[Bid],
    *,
    regularity_grid: int = 64,
) -> MechanismOutcome:
    """Run the optimal known-quality auction on a bid profile.

    Refuses irregular distributions.  Winners are paid per unit the critical
    bid at which a competitor (on residual capacity) would have taken the
    unit, capped at the winner's upper cost bound; units no competitor could
    absorb are paid at the upper bound.  Losers pay and receive nothing.
    """
    _require_regular(config, regularity_grid)
    q = _validate_instance(config, qualities, bids)
    n = config.n_agents
    reward_scale = config.reward_scale
    caps = np.array([bid.capacity for bid in bids], dtype=np.int64)
    scores = _scores(config, q, bids)
    units = alloc_greedy(scores, caps, config.units)

    payments = np.zeros(n)
    for i in range(n):
        if units[i] == 0:
            continue
        dist_i = config.distributions[i]
        # Highest cost at which the winner still allocates: the upper cost
        # bound, shrunk to G_i^{-1}(0) when the winner's own score would turn
        # negative before reaching it.  Units beyond that bid are never won,
        # so they cannot be priced above it.
        price_cap = dist_i.g_inverse(q[i], reward_scale, 0.0, bids[i].capacity)
        residual = caps - units
        residual[i] = 0
        rival_units = alloc_greedy(scores, residual, int(units[i]))
        pay = float(units[i] - rival_units.sum()) * price_cap
        for k in np.flatnonzero(rival_units):
            critical = dist_i.g_inverse(q[i], reward_scale, float(scores[k]), bids[i].capacity)
            pay += float(rival_units[k]) * min(critical, price_cap)
        payments[i] = pay

    return MechanismOutcome(units, payments, auctioneer_utility(units, payments, q, reward_scale))


def integral_payment(
    config: MarketConfig,
    qualities,
    bids: Sequence[Bid],
    agent: int,
    *,
    regularity_grid: int = 64,
) -> float:
    """Payment to ``agent`` via the cost-integral identity.

    Computes ``c_i * x_i(c_i) + integral over z in [c_i, cost_hi] of x_i(z)``
    where ``x_i(z)`` is the allocation to the agent were it to bid cost z,
    everything else fixed.  The allocation is a step function of z; its
    breakpoints are the bids at which some competitor's score overtakes the
    agent's, so the integral is an exact finite sum evaluated at segment
    midpoints.
    """
    _require_regular(config, regularity_grid)
    q = _validate_instance(config, qualities, bids)
    i = agent
    dist_i = config.distributions[i]
    cost_lo, cost_hi = dist_i.cost_bounds
    bid_cost = bids[i].cost
    cap_i = bids[i].capacity
    reward_scale = config.reward_scale
    caps = np.array([bid.capacity for bid in bids], dtype=np.int64)
    scores = _scores(config, q, bids)

    def units_at(z: float) -> int:
        s = scores.copy()
        s[i] = dist_i.g_score(q[i], reward_scale, z, cap_i)
        return int(alloc_greedy(s, caps, config.units)[i])

    score_at_lo = dist_i.g_score(q[i], reward_scale, cost_lo, cap_i)
    cuts = {bid_cost, cost_hi}
    rival_scores = [float(scores[k]) for k in range(len(bids)) if k != i]
    for g in rival_scores + [0.0]:
        if g <= score_at_lo:
            z = dist_i.g_inverse(q[i], reward_scale, g, cap_i)
            if bid_cost < z < cost_hi:
                cuts.add(z)

    points = sorted(cuts)
    total = 0.0
    for a, b in zip(points[:-1], points[1:]):
        if b > a:
            total += units_at(0.5 * (a + b)) * (b - a)
    return bid_cost * units_at(bid_cost) + total
