"""Shared value types and the budget-gated episode reward.

The central object is the episode-level reward: an episode earns its
discounted return only if its discounted cumulative cost stays within a
budget, otherwise it earns zero. Everything else in the package (teachers,
learners, evaluation) is built on top of this gate.

All functions here are pure and all values are immutable once built, so
they are safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence


class Step(NamedTuple):
    """One environment transition: the state acted from, the action taken,
    and the reward/cost emitted by that transition."""

    state: int
    action: int
    reward: float
    cost: float


@dataclass(frozen=True)
class Trajectory:
    """An ordered rollout of steps plus a termination flag.

    Rewards are expected in [0, 1] and costs must be nonnegative; the
    environments enforce this at emission time.
    """

    steps: tuple[Step, ...]
    terminated: bool = True

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class DiscountSpec:
    """Discount factor gamma in (0, 1].

    With gamma = 1 the usual 1/(1-gamma) budget ceiling is infinite; callers
    substitute the environment's ``alpha_max`` (maximum achievable trajectory
    cost) as the practical upper budget bound.
    """

    gamma: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")


@dataclass(frozen=True)
class Task:
    """A task identity: id, deployment-time budget, and env-specific payload.

    ``payload`` is opaque to this module (tree depth, or start/goal cells
    for grid tasks).
    """

    id: int
    target_budget: float = 0.0
    payload: object = None

    def __post_init__(self) -> None:
        if self.target_budget < 0.0:
            raise ValueError("target_budget must be >= 0")


class RolloutStat(NamedTuple):
    """Compressed episode summary: (discounted return, discounted cost).

    This is lossless for the budget-gated reward: for any budget alpha,
    the episode reward is ``disc_return`` if ``disc_cost <= alpha`` else 0.
    """

    disc_return: float
    disc_cost: float

    @classmethod
    def from_trajectory(cls, traj: Trajectory, disc: DiscountSpec) -> "RolloutStat":
        return cls(discounted_return(traj, disc), discounted_cost(traj, disc))

    def reward_at(self, budget: float) -> float:
        return self.disc_return if self.disc_cost <= budget else 0.0


def discounted_return(traj: Trajectory, disc: DiscountSpec) -> float:
    """Sum of gamma^t * reward_t over the trajectory, t indexed from 0."""
    if not traj.steps:
        raise ValueError("trajectory is empty")
    gamma = disc.gamma
    if gamma == 1.0:
        return sum(s.reward for s in traj.steps)
    total = 0.0
    g = 1.0
    for s in traj.steps:
        total += g * s.reward
        g *= gamma
    return total


def discounted_cost(traj: Trajectory, disc: DiscountSpec) -> float:
    """Sum of gamma^t * cost_t over the trajectory, t indexed from 0."""
    if not traj.steps:
        raise ValueError("trajectory is empty")
    gamma = disc.gamma
    if gamma == 1.0:
        return sum(s.cost for s in traj.steps)
    total = 0.0
    g = 1.0
    for s in traj.steps:
        total += g * s.cost
        g *= gamma
    return total


def trajectory_reward(traj: Trajectory, disc: DiscountSpec, budget: float) -> float:
    """Budget-gated episode reward.

    Returns the discounted return when the discounted cost is within
    ``budget`` (boundary counts as satisfied, compared with exact <=),
    and 0 otherwise.
    """
    if budget < 0.0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    if discounted_cost(traj, disc) <= budget:
        return discounted_return(traj, disc)
    return 0.0


def value_estimate(stats: Sequence[RolloutStat], budget: float) -> float:
    """Empirical mean of the budget-gated reward over rollout summaries."""
    if not stats:
        raise ValueError("stats is empty")
    total = 0.0
    for s in stats:
        if s.disc_cost <= budget:
            total += s.disc_return
    return total / len(stats)
