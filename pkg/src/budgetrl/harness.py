"""End-to-end training loop and policy evaluation.

One training step samples a task, asks the teacher for a training budget,
collects a batch of episodes under the current policy, applies one REINFORCE
update with the budget-gated rewards, and feeds each episode's summary back
into the teacher's buffers. Metrics are recorded per batch and periodically
extended with evaluation columns.

Randomness: a run's seed feeds a SeedSequence that spawns five child
streams, in order: policy init, task sampling, action sampling, teacher
(iid draws), evaluation. Two runs with equal configs are bit-identical.

Grid episodes draw ``horizon`` uniforms per episode in one block (the
compiled runner consumes them per step); tree episodes draw one uniform per
step. Both schemes are fixed, which keeps the streams aligned across runs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import DiscountSpec, RolloutStat, Step, Task, Trajectory
from .envs import (
    Environment,
    GridLayout,
    PuddleGridEnv,
    binary_tree_env,
    binary_tree_task,
    default_puddle_layout,
    generate_multi_tasks,
    single_grid_task,
)
from .learner import (
    RewardShaper,
    batch_score_gradients,
    reinforce_update,
    shaped_reward_from_stat,
)
from .policy import AdamState, MlpPolicy, Policy, TabularPolicy, adam_step
from .teacher import Teacher, TeacherConfig

METRICS_HEADER = (
    "episode,task_id,train_alpha,train_reward,mean_cost,mean_len,"
    "eval_constrained,eval_unconstrained"
)

ENV_KINDS = ("binary_tree", "puddle_single", "puddle_multi")


@dataclass(frozen=True)
class EnvSpec:
    """Which environment to build and its knobs.

    ``task_seed`` fixes the multi-task set independently of the run seed, so
    different training seeds share one task collection.
    """

    kind: str = "binary_tree"
    depth: int = 12
    horizon: int = 200
    n_tasks: int = 100
    task_seed: int = 0
    map_text: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ENV_KINDS:
            raise ValueError(f"unknown env kind {self.kind!r}; expected {ENV_KINDS}")


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvSpec = field(default_factory=EnvSpec)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    total_episodes: int = 1000
    batch_size: int = 5
    learning_rate: float = 3e-4
    hidden_width: int = 64
    gamma: float = 1.0
    shaping: str = "budget"
    alpha_reg: float = 0.9
    eval_interval: int = 1000
    eval_episodes: int = 20
    eval_greedy: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.total_episodes < 0:
            raise ValueError("total_episodes must be >= 0")
        for name in ("batch_size", "hidden_width", "eval_interval", "eval_episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class MetricsRecord:
    """One row per training batch; eval columns only at eval points."""

    episode: int
    task_id: int
    train_alpha: float
    train_reward: float
    mean_cost: float
    mean_len: float
    eval_constrained: float | None = None
    eval_unconstrained: float | None = None


@dataclass
class TrainResult:
    policy: Policy
    records: list[MetricsRecord]
    teacher: Teacher
    final_constrained: float | None
    final_unconstrained: float | None


def build_env(spec: EnvSpec) -> tuple[Environment, list[Task]]:
    if spec.kind == "binary_tree":
        return binary_tree_env(spec.depth), [binary_tree_task(spec.depth)]
    layout = (
        GridLayout.from_text(spec.map_text)
        if spec.map_text is not None
        else default_puddle_layout()
    )
    env = PuddleGridEnv(layout, spec.horizon)
    if spec.kind == "puddle_single":
        return env, [single_grid_task()]
    return env, generate_multi_tasks(layout, spec.n_tasks, spec.task_seed)


def run_episode(
    env: Environment,
    task: Task,
    policy: Policy,
    rng: np.random.Generator,
    greedy: bool = False,
) -> Trajectory:
    """Reference rollout through the object-level environment."""
    state = env.reset(task)
    feature_based = isinstance(policy, MlpPolicy)
    steps = []
    done = False
    while not done:
        obs = env.encode_features(state) if feature_based else state
        if greedy:
            action = policy.greedy_action(obs)
        else:
            action = policy.sample_action(obs, rng)
        nxt, reward, cost, done = env.step(action)
        steps.append(Step(state, action, reward, cost))
        state = nxt
    return Trajectory(tuple(steps), terminated=True)


# ---------------------------------------------------------------------------
# Compiled grid path
# ---------------------------------------------------------------------------


@dataclass
class _GridEpisode:
    """Arrays describing one kernel episode (pre-action poses per step)."""

    xs: np.ndarray
    ys: np.ndarray
    ors: np.ndarray
    acts: np.ndarray
    costs: np.ndarray
    reached: bool
    stat: RolloutStat


class _GridRunner:
    """Wraps the compiled episode kernel for one environment instance."""

    def __init__(self, env: PuddleGridEnv, gamma: float):
        layout = env.layout
        self.env = env
        self.gamma = gamma
        self.width = layout.width
        self.height = layout.height
        self.horizon = env.horizon
        self.lava = np.zeros((layout.height, layout.width), dtype=np.bool_)
        for x, y in layout.lava_cells:
            self.lava[y, x] = True
        self._no_uniforms = np.empty(0)

    def _pose(self, task: Task) -> tuple[int, int, int, int, int]:
        spec = task.payload
        if spec is None:
            layout = self.env.layout
            (x, y), o = layout.agent_start, layout.agent_orientation
            gx, gy = layout.goal
        else:
            (x, y), o = spec.start, spec.orientation
            gx, gy = spec.goal
        return x, y, o, gx, gy

    def episode(
        self,
        task: Task,
        policy: MlpPolicy,
        rng: np.random.Generator | None,
        greedy: bool = False,
    ) -> _GridEpisode:
        x0, y0, o0, gx, gy = self._pose(task)
        uniforms = self._no_uniforms if greedy else rng.random(self.horizon)
        xs = np.empty(self.horizon, dtype=np.int64)
        ys = np.empty(self.horizon, dtype=np.int64)
        ors = np.empty(self.horizon, dtype=np.int64)
        acts = np.empty(self.horizon, dtype=np.int64)
        costs = np.empty(self.horizon)
        length, reached, ret, cost = _kernels.grid_episode(
            policy.w1,
            policy.b1,
            policy.w2,
            policy.b2,
            policy.w3,
            policy.b3,
            self.lava,
            self.width,
            self.height,
            x0,
            y0,
            o0,
            gx,
            gy,
            self.horizon,
            self.gamma,
            uniforms,
            greedy,
            xs,
            ys,
            ors,
            acts,
            costs,
        )
        return _GridEpisode(
            xs=xs[:length],
            ys=ys[:length],
            ors=ors[:length],
            acts=acts[:length],
            costs=costs[:length],
            reached=bool(reached),
            stat=RolloutStat(float(ret), float(cost)),
        )

    def features(self, episodes: list[_GridEpisode], tasks_goal: list[tuple[int, int]]) -> np.ndarray:
        """Stacked per-step feature rows for a batch of episodes."""
        n = sum(len(e.acts) for e in episodes)
        feats = np.zeros((n, 8))
        row = 0
        for ep, (gx, gy) in zip(episodes, tasks_goal):
            k = len(ep.acts)
            feats[row : row + k, 0] = ep.xs / self.width
            feats[row : row + k, 1] = ep.ys / self.height
            feats[np.arange(row, row + k), 2 + ep.ors] = 1.0
            feats[row : row + k, 6] = gx / self.width
            feats[row : row + k, 7] = gy / self.height
            row += k
        return feats

    def goal_of(self, task: Task) -> tuple[int, int]:
        *_, gx, gy = self._pose(task)
        return gx, gy


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(
    policy: Policy,
    env: Environment,
    tasks: list[Task],
    disc: DiscountSpec,
    budget: float | None,
    n_eval: int,
    rng: np.random.Generator,
    greedy: bool = False,
) -> tuple[float, float]:
    """Mean budget-gated return and mean plain return over fresh rollouts.

    ``budget=None`` gates each task at its own deployment budget. Both means
    come from the same rollouts, so the constrained value never exceeds the
    unconstrained one.
    """
    if not tasks:
        raise ValueError("tasks is empty")
    if n_eval < 1:
        raise ValueError("n_eval must be >= 1")
    runner = None
    if isinstance(env, PuddleGridEnv):
        runner = _GridRunner(env, disc.gamma)
    constrained_total = 0.0
    unconstrained_total = 0.0
    for task in tasks:
        gate = task.target_budget if budget is None else budget
        for _ in range(n_eval):
            if runner is not None:
                stat = runner.episode(task, policy, rng, greedy=greedy).stat
            else:
                traj = run_episode(env, task, policy, rng, greedy=greedy)
                stat = RolloutStat.from_trajectory(traj, disc)
            constrained_total += stat.reward_at(gate)
            unconstrained_total += stat.disc_return
    scale = len(tasks) * n_eval
    return constrained_total / scale, unconstrained_total / scale


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def train(config: ExperimentConfig) -> TrainResult:
    env, tasks = build_env(config.env)
    disc = DiscountSpec(config.gamma)
    seed_seq = np.random.SeedSequence(config.seed)
    init_ss, task_ss, action_ss, teacher_ss, eval_ss = seed_seq.spawn(5)
    rng_init = np.random.default_rng(init_ss)
    rng_task = np.random.default_rng(task_ss)
    rng_action = np.random.default_rng(action_ss)
    rng_teacher = np.random.default_rng(teacher_ss)
    rng_eval = np.random.default_rng(eval_ss)

    if env.state_count is not None:
        policy: Policy = TabularPolicy.uniform(env.state_count, env.action_count)
    else:
        policy = MlpPolicy.initialize(
            env.state_dim, env.action_count, hidden=config.hidden_width, rng=rng_init
        )
    teacher = Teacher(config.teacher, tasks, env.alpha_max)
    adam = AdamState.initialize(policy.parameters(), lr=config.learning_rate)
    shaper = RewardShaper(config.shaping, config.alpha_reg, env.alpha_max)
    runner = _GridRunner(env, disc.gamma) if isinstance(env, PuddleGridEnv) else None

    records: list[MetricsRecord] = []
    done_episodes = 0
    while done_episodes < config.total_episodes:
        batch_n = min(config.batch_size, config.total_episodes - done_episodes)
        task = tasks[int(rng_task.integers(len(tasks)))]
        alpha_t = teacher.propose_budget(task, done_episodes, rng_teacher)

        if runner is not None:
            episodes = [
                runner.episode(task, policy, rng_action) for _ in range(batch_n)
            ]
            stats = [ep.stat for ep in episodes]
            lengths = [len(ep.acts) for ep in episodes]
            shaped = np.array(
                [shaped_reward_from_stat(s, alpha_t, shaper) for s in stats]
            )
            advantages = shaped - shaped.mean()
            if np.any(advantages != 0.0):
                goal = runner.goal_of(task)
                feats = runner.features(episodes, [goal] * batch_n)
                actions = np.concatenate([ep.acts for ep in episodes])
                weights = np.concatenate(
                    [np.full(len(ep.acts), adv) for ep, adv in zip(episodes, advantages)]
                )
                grads = batch_score_gradients(policy, feats, actions, weights, batch_n)
            else:
                grads = [np.zeros_like(p) for p in policy.parameters()]
            new_params, adam = adam_step(
                policy.parameters(), [-g for g in grads], adam
            )
            policy = policy.with_parameters(new_params)
        else:
            trajs = [
                run_episode(env, task, policy, rng_action) for _ in range(batch_n)
            ]
            stats = [RolloutStat.from_trajectory(t, disc) for t in trajs]
            lengths = [len(t) for t in trajs]
            shaped = [shaped_reward_from_stat(s, alpha_t, shaper) for s in stats]
            policy, adam = reinforce_update(
                policy, list(zip(trajs, shaped)), adam
            )

        for stat in stats:
            teacher.observe_rollout(task, stat)
        prev = done_episodes
        done_episodes += batch_n

        record = MetricsRecord(
            episode=done_episodes,
            task_id=task.id,
            train_alpha=float(alpha_t),
            train_reward=float(np.mean(shaped)),
            mean_cost=float(np.mean([s.disc_cost for s in stats])),
            mean_len=float(np.mean(lengths)),
        )
        crossed = done_episodes // config.eval_interval > prev // config.eval_interval
        if crossed or done_episodes >= config.total_episodes:
            cons, uncons = evaluate(
                policy,
                env,
                tasks,
                disc,
                budget=None,
                n_eval=config.eval_episodes,
                rng=rng_eval,
                greedy=config.eval_greedy,
            )
            record.eval_constrained = cons
            record.eval_unconstrained = uncons
        records.append(record)

    final_c = records[-1].eval_constrained if records else None
    final_u = records[-1].eval_unconstrained if records else None
    return TrainResult(
        policy=policy,
        records=records,
        teacher=teacher,
        final_constrained=final_c,
        final_unconstrained=final_u,
    )


# ---------------------------------------------------------------------------
# Metrics serialization
# ---------------------------------------------------------------------------


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return f"{value:.10g}"


def metrics_to_csv(records: list[MetricsRecord]) -> str:
    out = io.StringIO()
    out.write(METRICS_HEADER + "\n")
    for r in records:
        out.write(
            f"{r.episode},{r.task_id},{_fmt(r.train_alpha)},{_fmt(r.train_reward)},"
            f"{_fmt(r.mean_cost)},{_fmt(r.mean_len)},"
            f"{_fmt(r.eval_constrained)},{_fmt(r.eval_unconstrained)}\n"
        )
    return out.getvalue()


def write_metrics(records: list[MetricsRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(metrics_to_csv(records))
