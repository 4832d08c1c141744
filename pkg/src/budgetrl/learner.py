"""REINFORCE updates driven by episode-level shaped rewards.

Credit assignment is whole-episode: the single shaped reward of an episode
multiplies the summed score function of every step in it. The baseline is
the batch mean of the shaped rewards, which keeps the estimator unbiased
while cutting variance; with it, a batch of identical rewards produces a
zero update.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import DiscountSpec, RolloutStat, Trajectory
from .policy import AdamState, MlpPolicy, Policy, adam_step

# One training batch: (trajectory, shaped episode reward) pairs.
Batch = Sequence[tuple[Trajectory, float]]


@dataclass(frozen=True)
class RewardShaper:
    """Turns an episode into its training reward.

    kind "budget": the hard gate, return iff cost within the training budget.
    kind "soft": no hard gate; the return is scaled down linearly in the
    episode cost, ``return * (1 - alpha_reg * cost / alpha_max)``, floored at
    zero. The soft variant ignores the training budget.
    """

    kind: str = "budget"
    alpha_reg: float = 0.9
    alpha_max: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("budget", "soft"):
            raise ValueError(f"unknown shaper kind {self.kind!r}")
        if self.kind == "soft" and self.alpha_max <= 0:
            raise ValueError("soft shaping needs alpha_max > 0")


def shaped_reward_from_stat(
    stat: RolloutStat, training_budget: float, shaper: RewardShaper | None = None
) -> float:
    if training_budget < 0.0:
        raise ValueError(f"budget must be >= 0, got {training_budget}")
    if shaper is None or shaper.kind == "budget":
        return stat.reward_at(training_budget)
    scale = 1.0 - shaper.alpha_reg * stat.disc_cost / shaper.alpha_max
    return max(0.0, stat.disc_return * scale)


def shaped_reward_for_episode(
    traj: Trajectory,
    disc: DiscountSpec,
    training_budget: float,
    shaper: RewardShaper | None = None,
) -> float:
    return shaped_reward_from_stat(
        RolloutStat.from_trajectory(traj, disc), training_budget, shaper
    )


def batch_score_gradients(
    policy: Policy,
    states: np.ndarray,
    actions: np.ndarray,
    weights: np.ndarray,
    batch_size: int,
) -> list[np.ndarray]:
    """REINFORCE gradient from flattened per-step arrays.

    ``weights[i]`` is the advantage (shaped reward minus baseline) of the
    episode step i belongs to; the result is (1/B) sum_i w_i grad log pi.
    """
    grads = policy.weighted_score_gradients(states, actions, weights)
    return [g / batch_size for g in grads]


def reinforce_update(
    policy: Policy,
    batch: Batch,
    adam: AdamState,
    featurize: Callable[[int], np.ndarray] | None = None,
) -> tuple[Policy, AdamState]:
    """One policy-gradient ascent step from a batch of episodes.

    ``featurize`` maps stored state ids to policy inputs and is required for
    feature-based policies; tabular policies consume the ids directly.
    """
    if not batch:
        raise ValueError("batch is empty")
    rewards = np.array([r for _, r in batch])
    baseline = rewards.mean()
    advantages = rewards - baseline

    if np.all(advantages == 0.0):
        # Zero signal: the gradient is exactly zero, no need to backprop.
        grads = [np.zeros_like(p) for p in policy.parameters()]
    else:
        step_states: list = []
        step_actions: list[int] = []
        step_weights: list[float] = []
        for (traj, _), adv in zip(batch, advantages):
            for step in traj.steps:
                step_states.append(step.state)
                step_actions.append(step.action)
                step_weights.append(adv)
        if isinstance(policy, MlpPolicy):
            if featurize is None:
                raise ValueError("feature-based policy needs a featurize function")
            states = np.stack([featurize(s) for s in step_states])
        else:
            states = np.asarray(step_states, dtype=np.intp)
        grads = batch_score_gradients(
            policy,
            states,
            np.asarray(step_actions, dtype=np.intp),
            np.asarray(step_weights),
            len(batch),
        )

    # Ascent on the surrogate: negate into the Adam minimiser.
    new_params, new_adam = adam_step(
        policy.parameters(), [-g for g in grads], adam
    )
    return policy.with_parameters(new_params), new_adam
