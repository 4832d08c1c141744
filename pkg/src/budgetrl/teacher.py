"""Training-budget selection strategies.

The adaptive strategy keeps, per task, a FIFO buffer of the last K rollout
summaries and picks the smallest budget at which the buffer's empirical mean
gated reward still clears a performance threshold beta. Because that mean is
a step function of the budget whose breakpoints are exactly the buffered
costs, the search runs over the sorted breakpoint list and is exact.

Static baselines (the deployment target, the unconstrained ceiling, an iid
draw, and a fixed exponential decay) share the same entry point.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import RolloutStat, Task, value_estimate

STRATEGIES = (
    "curltrac",
    "curltrac_global",
    "target",
    "unconstrained",
    "iid",
    "exp_schedule",
)

# Reserved buffer key for the shared-buffer variant.
GLOBAL_KEY = -1


class BufferNotReady(RuntimeError):
    """Raised when an adaptive budget is requested from a non-full buffer."""


@dataclass(frozen=True)
class TeacherConfig:
    """Strategy tag plus the knobs the strategies read.

    beta is the performance threshold of the adaptive strategies; capacity is
    the per-task buffer size K; decay_episodes is the exponential schedule's
    decay length T (measured in episodes).
    """

    strategy: str = "curltrac"
    beta: float = 0.5
    capacity: int = 10
    decay_episodes: int = 1

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(
                f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}"
            )
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.decay_episodes < 1:
            raise ValueError("decay_episodes must be >= 1")


class TaskBuffer:
    """FIFO of at most ``capacity`` rollout summaries, plus a cached budget.

    The cache is invalidated on every insert so the next budget request
    recomputes from the current contents.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._stats: deque[RolloutStat] = deque(maxlen=capacity)
        self.cached_budget: float | None = None

    def push(self, stat: RolloutStat) -> None:
        self._stats.append(stat)
        self.cached_budget = None

    @property
    def full(self) -> bool:
        return len(self._stats) == self.capacity

    def stats(self) -> list[RolloutStat]:
        return list(self._stats)

    def __len__(self) -> int:
        return len(self._stats)


def curltrac_budget(
    buffer: TaskBuffer, target: float, alpha_max: float, beta: float
) -> float:
    """Smallest budget in [target, alpha_max] whose empirical mean gated
    reward over the buffer reaches min(beta, best achievable mean).

    When the buffer holds no successful rollout at all, returns alpha_max:
    only the unconstrained budget can reward anything the policy might do
    next. Requires a full buffer.
    """
    if not buffer.full:
        raise BufferNotReady(
            f"buffer holds {len(buffer)} of {buffer.capacity} rollouts"
        )
    if target > alpha_max:
        raise ValueError(f"target {target} exceeds alpha_max {alpha_max}")
    stats = buffer.stats()
    best = value_estimate(stats, alpha_max)
    if best == 0.0:
        return alpha_max
    threshold = min(beta, best)
    candidates = sorted({target, *(
        s.disc_cost for s in stats if target <= s.disc_cost <= alpha_max
    )})
    # The mean gated reward is monotone in the budget, so binary-search the
    # leftmost candidate that clears the threshold. The last candidate
    # always does: it admits every rollout that alpha_max admits.
    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if value_estimate(stats, candidates[mid]) >= threshold:
            hi = mid
        else:
            lo = mid + 1
    return candidates[lo]


class Teacher:
    """Owns the per-task buffers and dispatches on the configured strategy."""

    def __init__(self, config: TeacherConfig, tasks: list[Task], alpha_max: float):
        self.config = config
        self.alpha_max = float(alpha_max)
        self._targets = {t.id: t.target_budget for t in tasks}
        for target in self._targets.values():
            if target > self.alpha_max:
                raise ValueError("task target budget exceeds alpha_max")
        if config.strategy == "curltrac_global":
            self._buffers = {GLOBAL_KEY: TaskBuffer(config.capacity)}
            self._global_target = max(self._targets.values())
        else:
            self._buffers = {t.id: TaskBuffer(config.capacity) for t in tasks}
            self._global_target = 0.0

    def buffer_for(self, task: Task) -> TaskBuffer:
        key = GLOBAL_KEY if self.config.strategy == "curltrac_global" else task.id
        return self._buffers[key]

    def propose_budget(
        self, task: Task, episode_index: int, rng: np.random.Generator
    ) -> float:
        """Training budget for the next batch of episodes on ``task``.

        ``episode_index`` is the number of episodes completed so far in the
        run; only the exponential schedule reads it.
        """
        cfg = self.config
        if cfg.strategy == "target":
            return self._targets[task.id]
        if cfg.strategy == "unconstrained":
            return self.alpha_max
        if cfg.strategy == "iid":
            return float(rng.uniform(self._targets[task.id], self.alpha_max))
        if cfg.strategy == "exp_schedule":
            target = self._targets[task.id]
            frac = min(episode_index, cfg.decay_episodes) / cfg.decay_episodes
            return target + (self.alpha_max - target) * math.exp(-5.0 * frac)
        # Adaptive strategies: unconstrained during buffer warm-up.
        buf = self.buffer_for(task)
        if not buf.full:
            return self.alpha_max
        if buf.cached_budget is None:
            target = (
                self._global_target
                if cfg.strategy == "curltrac_global"
                else self._targets[task.id]
            )
            buf.cached_budget = curltrac_budget(
                buf, target, self.alpha_max, cfg.beta
            )
        return buf.cached_budget

    def observe_rollout(self, task: Task, stat: RolloutStat) -> None:
        self.buffer_for(task).push(stat)
