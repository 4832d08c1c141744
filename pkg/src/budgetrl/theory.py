"""Empirical rollout-complexity comparison on the depth-H decision tree.

Two regimes are measured. Holding the deployment budget fixed from the
start, a uniform policy needs a geometrically distributed number of rollouts
(mean 2^H) before it ever sees a reward. A staged budget schedule instead
admits exactly the leftmost 2^(H-t) leaves at stage t and shrinks the
per-stage performance threshold as beta_t = 0.5 * (1 - eps)^(t-1); with

    K_t = ceil( ln(2/delta) / (2 * eps^2 * (1-eps)^(t-1)) )

rollouts per stage, one tree level per stage can be pinned down by direct
frequency estimation, and the total sum_t K_t grows only polynomially in H.
The staged learner here estimates, from the successful rollouts of a stage,
the empirical frequency of the action taken at the stage's level, mirroring
the concentration argument rather than running a gradient learner; a
gradient-based mode is available for qualitative comparison.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .core import DiscountSpec, RolloutStat
from .envs import binary_tree_env, binary_tree_task
from .learner import reinforce_update
from .policy import AdamState, TabularPolicy
from .harness import run_episode

SCALING_HEADER = "H,strategy,seed,rollouts,converged"

THEORY_STRATEGIES = ("target", "curriculum", "curriculum_reinforce")

DEFAULT_ROLLOUT_CAP = 10_000_000


def beta_schedule(H: int, epsilon: float) -> list[float]:
    """Stage thresholds beta_t = 0.5 * (1 - eps)^(t-1), strictly decreasing."""
    _check_epsilon_delta(epsilon, 0.5)
    return [0.5 * (1.0 - epsilon) ** (t - 1) for t in range(1, H + 1)]


def stage_rollout_count(t: int, epsilon: float, delta: float) -> int:
    """K_t = ceil(ln(2/delta) / (2 eps^2 (1-eps)^(t-1)))."""
    _check_epsilon_delta(epsilon, delta)
    if t < 1:
        raise ValueError("t must be >= 1")
    return math.ceil(
        math.log(2.0 / delta) / (2.0 * epsilon**2 * (1.0 - epsilon) ** (t - 1))
    )


def _check_epsilon_delta(epsilon: float, delta: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")


def first_success_rollouts(
    H: int, rng: np.random.Generator, cap: int = DEFAULT_ROLLOUT_CAP
) -> int:
    """Rollouts a uniform policy needs to first reach the leftmost leaf.

    Simulates full root-to-leaf walks with fair coin actions; the count is
    geometric with success probability 2^-H. Returns ``cap`` if no success
    occurred within the cap (with the default cap this has negligible
    probability for H <= 16).
    """
    if not 1 <= H <= 16:
        raise ValueError(f"H must be in [1, 16], got {H}")
    trials = 0
    while trials < cap:
        trials += 1
        leaf = 0
        for _ in range(H):
            leaf = 2 * leaf + (1 if rng.random() < 0.5 else 0)
        if leaf == 0:
            return trials
    return cap


@dataclass
class StagedRunResult:
    total_rollouts: int
    prob_left: np.ndarray
    converged: bool
    stage_alphas: list[float]
    stage_betas: list[float]
    stage_counts: list[int]


def staged_schedule_run(
    H: int,
    epsilon: float,
    delta: float,
    rng: np.random.Generator,
    mode: str = "frequency",
    cap: int = DEFAULT_ROLLOUT_CAP,
    batch_size: int = 5,
    learning_rate: float = 3e-4,
) -> StagedRunResult:
    """Run the staged budget schedule for H stages and report the total
    rollouts spent plus the resulting policy.

    At stage t the budget alpha_t admits exactly the leftmost 2^(H-t)
    leaves, so a rollout succeeds iff its first t actions are all Left. In
    "frequency" mode the learner sets the Left-probability of the stage's
    on-path node to the empirical frequency of Left among that stage's
    successful rollouts (levels with no observed success stay untouched).
    "reinforce" mode trains a tabular softmax policy with the package's
    gradient learner under the same budget schedule instead.

    The run converges when pi(Left | on-path node) >= 1 - epsilon at every
    level. Uses gamma = 0.5^(1/H), the boundary of the threshold-feasibility
    condition, for the discounted bookkeeping.
    """
    if not 1 <= H <= 16:
        raise ValueError(f"H must be in [1, 16], got {H}")
    _check_epsilon_delta(epsilon, delta)
    if mode not in ("frequency", "reinforce"):
        raise ValueError(f"unknown mode {mode!r}")

    gamma = 0.5 ** (1.0 / H)
    # Discounted cost of leaf i: the whole path cost i lands on the final
    # step, discount exponent H-1.
    leaf_disc = gamma ** (H - 1)
    betas = beta_schedule(H, epsilon)
    alphas = [leaf_disc * (2 ** (H - t) - 1) for t in range(1, H + 1)]
    counts = [stage_rollout_count(t, epsilon, delta) for t in range(1, H + 1)]

    if mode == "reinforce":
        return _schedule_run_reinforce(
            H, gamma, epsilon, alphas, betas, counts, rng, cap,
            batch_size, learning_rate,
        )

    prob_left = np.full(H, 0.5)
    total = 0
    capped = False
    for t in range(1, H + 1):
        k_t = counts[t - 1]
        if total + k_t > cap:
            capped = True
            break
        total += k_t
        n_within = 2 ** (H - t)
        level = t - 1
        successes = 0
        left_at_level = 0
        for _ in range(k_t):
            leaf = 0
            on_path_action = -1
            for h in range(H):
                if leaf == 0:
                    p_left = prob_left[h]
                else:
                    p_left = 0.5
                action = 0 if rng.random() < p_left else 1
                if h == level and leaf == 0:
                    on_path_action = action
                leaf = 2 * leaf + action
            if leaf < n_within:
                successes += 1
                if on_path_action == 0:
                    left_at_level += 1
        if successes > 0:
            prob_left[level] = left_at_level / successes
    converged = not capped and bool(np.all(prob_left >= 1.0 - epsilon))
    return StagedRunResult(
        total_rollouts=total,
        prob_left=prob_left,
        converged=converged,
        stage_alphas=alphas,
        stage_betas=betas,
        stage_counts=counts,
    )


def _schedule_run_reinforce(
    H, gamma, epsilon, alphas, betas, counts, rng, cap, batch_size, lr
):
    disc = DiscountSpec(gamma)
    env = binary_tree_env(H)
    task = binary_tree_task(H)
    policy = TabularPolicy.uniform(env.state_count, env.action_count)
    adam = AdamState.initialize(policy.parameters(), lr=lr)
    total = 0
    capped = False
    for t in range(1, H + 1):
        k_t = counts[t - 1]
        if total + k_t > cap:
            capped = True
            break
        total += k_t
        alpha_t = alphas[t - 1]
        collected = 0
        while collected < k_t:
            b = min(batch_size, k_t - collected)
            batch = []
            for _ in range(b):
                traj = run_episode(env, task, policy, rng)
                stat = RolloutStat.from_trajectory(traj, disc)
                batch.append((traj, stat.reward_at(alpha_t)))
            policy, adam = reinforce_update(policy, batch, adam)
            collected += b
    p_left = _on_path_left_probs(policy, H)
    converged = not capped and bool(np.all(p_left >= 1.0 - epsilon))
    return StagedRunResult(
        total_rollouts=total,
        prob_left=p_left,
        converged=converged,
        stage_alphas=alphas,
        stage_betas=betas,
        stage_counts=counts,
    )


def _on_path_left_probs(policy: TabularPolicy, H: int) -> np.ndarray:
    """pi(Left | leftmost node of each level 0..H-1)."""
    probs = np.empty(H)
    for h in range(H):
        state = (1 << h) - 1
        probs[h] = policy.action_distribution(state)[0]
    return probs


@dataclass
class ScalingResult:
    depth: int
    strategy: str
    seeds: list[int]
    rollout_counts: list[int]
    converged_flags: list[bool]
    median: float
    q1: float
    q3: float


def scaling_report(
    H_list: list[int],
    strategies: list[str],
    seeds: list[int],
    epsilon: float | None = None,
    delta: float = 0.1,
    cap: int = DEFAULT_ROLLOUT_CAP,
) -> list[ScalingResult]:
    """Per-depth rollout counts for each strategy over a fixed seed list.

    ``epsilon=None`` uses the depth-dependent choice 2/(H+1). The "target"
    strategy measures rollouts to the first success under a uniform policy;
    the "curriculum" strategies run the staged schedule to completion.
    """
    if not H_list or not strategies or not seeds:
        raise ValueError("H_list, strategies and seeds must be non-empty")
    for strategy in strategies:
        if strategy not in THEORY_STRATEGIES:
            raise ValueError(
                f"unknown strategy {strategy!r}; expected one of {THEORY_STRATEGIES}"
            )
    results = []
    for H in H_list:
        eps = 2.0 / (H + 1) if epsilon is None else epsilon
        for strategy in strategies:
            counts: list[int] = []
            flags: list[bool] = []
            for seed in seeds:
                rng = np.random.default_rng(seed)
                if strategy == "target":
                    n = first_success_rollouts(H, rng, cap=cap)
                    counts.append(n)
                    flags.append(n < cap)
                else:
                    mode = "frequency" if strategy == "curriculum" else "reinforce"
                    run = staged_schedule_run(
                        H, eps, delta, rng, mode=mode, cap=cap
                    )
                    counts.append(run.total_rollouts)
                    flags.append(run.converged)
            arr = np.asarray(counts, dtype=float)
            results.append(
                ScalingResult(
                    depth=H,
                    strategy=strategy,
                    seeds=list(seeds),
                    rollout_counts=counts,
                    converged_flags=flags,
                    median=float(np.median(arr)),
                    q1=float(np.percentile(arr, 25)),
                    q3=float(np.percentile(arr, 75)),
                )
            )
    return results


def scaling_to_csv(results: list[ScalingResult]) -> str:
    out = io.StringIO()
    out.write(SCALING_HEADER + "\n")
    for res in results:
        for seed, n, flag in zip(res.seeds, res.rollout_counts, res.converged_flags):
            out.write(f"{res.depth},{res.strategy},{seed},{n},{int(flag)}\n")
    return out.getvalue()


def growth_ratio_per_two_depths(results: list[ScalingResult], strategy: str) -> float:
    """Overall mean-count growth factor per +2 depth for one strategy.

    Computed as (mean at H_max / mean at H_min) ** (2 / (H_max - H_min)).
    A doubling branch factor gives 4; polynomial growth gives much less.
    """
    rows = sorted(
        (r for r in results if r.strategy == strategy), key=lambda r: r.depth
    )
    if len(rows) < 2:
        raise ValueError("need at least two depths for a growth ratio")
    lo, hi = rows[0], rows[-1]
    mean_lo = float(np.mean(lo.rollout_counts))
    mean_hi = float(np.mean(hi.rollout_counts))
    return (mean_hi / mean_lo) ** (2.0 / (hi.depth - lo.depth))


def loglog_slope(results: list[ScalingResult], strategy: str) -> float:
    """Least-squares slope of log(mean rollouts) against log(H)."""
    rows = sorted(
        (r for r in results if r.strategy == strategy), key=lambda r: r.depth
    )
    if len(rows) < 2:
        raise ValueError("need at least two depths for a slope")
    xs = np.log([r.depth for r in rows])
    ys = np.log([np.mean(r.rollout_counts) for r in rows])
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


def scaling_verdict(results: list[ScalingResult]) -> str:
    """One-line summary of how each measured strategy scales with depth."""
    parts = []
    strategies = sorted({r.strategy for r in results})
    for strategy in strategies:
        depths = {r.depth for r in results if r.strategy == strategy}
        if len(depths) < 2:
            parts.append(f"{strategy}: single depth, no trend")
            continue
        ratio = growth_ratio_per_two_depths(results, strategy)
        slope = loglog_slope(results, strategy)
        if ratio >= 3.0:
            kind = "exponential-like"
        elif slope <= 4.0:
            kind = "polynomial-like"
        else:
            kind = "unclear"
        parts.append(
            f"{strategy}: {kind} (x{ratio:.2f} per +2 depth, log-log slope {slope:.2f})"
        )
    return "verdict: " + "; ".join(parts)
