"""Reinforcement learning under strict per-episode cost budgets.

An episode earns its return only if its cumulative cost stays within a
budget. Training directly under a tight deployment budget starves the
learner of reward signal, so the teacher component relaxes the budget and
adaptively tightens it as the policy improves.
"""

from .core import (
    DiscountSpec,
    RolloutStat,
    Step,
    Task,
    Trajectory,
    discounted_cost,
    discounted_return,
    trajectory_reward,
    value_estimate,
)
from .teacher import Teacher, TeacherConfig, curltrac_budget

__all__ = [
    "DiscountSpec",
    "RolloutStat",
    "Step",
    "Task",
    "Trajectory",
    "Teacher",
    "TeacherConfig",
    "curltrac_budget",
    "discounted_cost",
    "discounted_return",
    "trajectory_reward",
    "value_estimate",
]

__version__ = "0.1.0"
