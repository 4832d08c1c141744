"""Command-line entry point.

Subcommands: ``train`` (one experiment), ``eval`` (score a checkpoint),
``sweep`` (a grid of runs over one axis and a seed list), ``theory`` (the
rollout-complexity comparison).

Configs are flat ``section.key = value`` text files; ``#`` starts a comment.
Unknown keys are rejected. The full key reference lives in the README.
Every run writes into its own output directory and is reproducible: rerun
the same config and seed and the metrics file is byte-identical.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core import DiscountSpec
from .harness import (
    EnvSpec,
    ExperimentConfig,
    build_env,
    evaluate,
    train,
    write_metrics,
)
from .policy import load_policy, save_policy
from .teacher import STRATEGIES, TeacherConfig
from .theory import (
    THEORY_STRATEGIES,
    scaling_report,
    scaling_to_csv,
    scaling_verdict,
)

AGGREGATE_HEADER = (
    "setting,seed,final_eval_constrained,final_eval_unconstrained,episodes"
)


class CliError(Exception):
    """Configuration or IO problem that should abort with a diagnostic."""


# ---------------------------------------------------------------------------
# Flat config parsing
# ---------------------------------------------------------------------------

_KNOWN_KEYS = {
    "env.kind",
    "env.depth",
    "env.horizon",
    "env.n_tasks",
    "env.task_seed",
    "env.map_file",
    "teacher.strategy",
    "teacher.beta",
    "teacher.k",
    "teacher.decay_episodes",
    "learner.batch_size",
    "learner.learning_rate",
    "learner.hidden_width",
    "learner.shaping",
    "learner.alpha_reg",
    "run.gamma",
    "run.total_episodes",
    "run.eval_interval",
    "run.eval_episodes",
    "run.eval_greedy",
    "run.seed",
    "sweep.beta",
    "sweep.strategy",
    "sweep.seeds",
    "theory.h_list",
    "theory.epsilon",
    "theory.delta",
    "theory.seeds",
    "theory.strategies",
    "theory.cap",
}


def parse_flat_config(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"config line {lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KNOWN_KEYS:
            raise CliError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise CliError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"config file not found: {path}")
    return parse_flat_config(path.read_text())


def _get(values, key, default, cast):
    raw = values.get(key)
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError as exc:
        raise CliError(f"config key {key}: {exc}") from None


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _int_list(raw: str) -> list[int]:
    items = [s.strip() for s in raw.split(",") if s.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of integers")
    return [int(s) for s in items]


def _float_list(raw: str) -> list[float]:
    items = [s.strip() for s in raw.split(",") if s.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of numbers")
    return [float(s) for s in items]


def _str_list(raw: str) -> list[str]:
    items = [s.strip() for s in raw.split(",") if s.strip()]
    if not items:
        raise ValueError("expected a comma-separated list")
    return items


def experiment_config_from(values: dict[str, str], config_dir: Path) -> ExperimentConfig:
    map_text = None
    map_file = values.get("env.map_file")
    if map_file is not None:
        map_path = Path(map_file)
        if not map_path.is_absolute():
            map_path = config_dir / map_path
        if not map_path.is_file():
            raise CliError(f"map file not found: {map_path}")
        map_text = map_path.read_text()
    try:
        env = EnvSpec(
            kind=_get(values, "env.kind", "binary_tree", str),
            depth=_get(values, "env.depth", 12, int),
            horizon=_get(values, "env.horizon", 200, int),
            n_tasks=_get(values, "env.n_tasks", 100, int),
            task_seed=_get(values, "env.task_seed", 0, int),
            map_text=map_text,
        )
        teacher = TeacherConfig(
            strategy=_get(values, "teacher.strategy", "curltrac", str),
            beta=_get(values, "teacher.beta", 0.5, float),
            capacity=_get(values, "teacher.k", 10, int),
            decay_episodes=_get(values, "teacher.decay_episodes", 1, int),
        )
        return ExperimentConfig(
            env=env,
            teacher=teacher,
            total_episodes=_get(values, "run.total_episodes", 1000, int),
            batch_size=_get(values, "learner.batch_size", 5, int),
            learning_rate=_get(values, "learner.learning_rate", 3e-4, float),
            hidden_width=_get(values, "learner.hidden_width", 64, int),
            gamma=_get(values, "run.gamma", 1.0, float),
            shaping=_get(values, "learner.shaping", "budget", str),
            alpha_reg=_get(values, "learner.alpha_reg", 0.9, float),
            eval_interval=_get(values, "run.eval_interval", 1000, int),
            eval_episodes=_get(values, "run.eval_episodes", 20, int),
            eval_greedy=_get(values, "run.eval_greedy", False, _bool),
            seed=_get(values, "run.seed", 0, int),
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None


def apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "strategy", None) is not None:
        config = replace(
            config, teacher=replace(config.teacher, strategy=args.strategy)
        )
    if getattr(args, "episodes", None) is not None:
        config = replace(config, total_episodes=args.episodes)
    return config


def _config_echo(config: ExperimentConfig) -> list[str]:
    lines = [
        f"env.kind = {config.env.kind}",
        f"env.depth = {config.env.depth}",
        f"env.horizon = {config.env.horizon}",
        f"env.n_tasks = {config.env.n_tasks}",
        f"env.task_seed = {config.env.task_seed}",
        f"teacher.strategy = {config.teacher.strategy}",
        f"teacher.beta = {config.teacher.beta}",
        f"teacher.k = {config.teacher.capacity}",
        f"teacher.decay_episodes = {config.teacher.decay_episodes}",
        f"learner.batch_size = {config.batch_size}",
        f"learner.learning_rate = {config.learning_rate}",
        f"learner.hidden_width = {config.hidden_width}",
        f"learner.shaping = {config.shaping}",
        f"learner.alpha_reg = {config.alpha_reg}",
        f"run.gamma = {config.gamma}",
        f"run.total_episodes = {config.total_episodes}",
        f"run.eval_interval = {config.eval_interval}",
        f"run.eval_episodes = {config.eval_episodes}",
        f"run.eval_greedy = {config.eval_greedy}",
        f"run.seed = {config.seed}",
    ]
    if config.env.map_text is not None:
        lines.append("env.map = <custom>")
    return lines


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _run_single(config: ExperimentConfig, out_dir: Path, quiet: bool) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    result = train(config)
    wall = time.time() - started
    write_metrics(result.records, out_dir / "metrics.csv")
    save_policy(result.policy, out_dir / "policy.bin")
    summary = _config_echo(config) + [
        f"episodes = {config.total_episodes}",
        f"final_eval_constrained = {result.final_constrained}",
        f"final_eval_unconstrained = {result.final_unconstrained}",
        f"wall_time_s = {wall:.2f}",
    ]
    (out_dir / "summary.txt").write_text("\n".join(summary) + "\n")
    if not quiet:
        print(
            f"[{out_dir.name or out_dir}] episodes={config.total_episodes} "
            f"constrained={result.final_constrained} "
            f"unconstrained={result.final_unconstrained} ({wall:.1f}s)"
        )
    return {
        "constrained": result.final_constrained,
        "unconstrained": result.final_unconstrained,
        "episodes": config.total_episodes,
    }


def run_train(args) -> int:
    values = load_config_file(args.config)
    config = apply_overrides(
        experiment_config_from(values, Path(args.config).parent), args
    )
    _run_single(config, Path(args.out), args.quiet)
    return 0


def run_eval(args) -> int:
    values = load_config_file(args.config)
    config = apply_overrides(
        experiment_config_from(values, Path(args.config).parent), args
    )
    checkpoint = Path(args.checkpoint)
    if not checkpoint.is_file():
        raise CliError(f"checkpoint not found: {checkpoint}")
    policy = load_policy(checkpoint)
    env, tasks = build_env(config.env)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(5)[4])
    constrained, unconstrained = evaluate(
        policy,
        env,
        tasks,
        DiscountSpec(config.gamma),
        budget=args.budget,
        n_eval=config.eval_episodes,
        rng=rng,
        greedy=config.eval_greedy,
    )
    print(f"eval_constrained = {constrained}")
    print(f"eval_unconstrained = {unconstrained}")
    return 0


def _sweep_worker(job):
    config, run_dir, quiet = job
    return _run_single(config, run_dir, quiet)


def run_sweep(args) -> int:
    values = load_config_file(args.config)
    base = experiment_config_from(values, Path(args.config).parent)
    seeds = _get(values, "sweep.seeds", None, _int_list)
    if seeds is None:
        raise CliError("sweep requires sweep.seeds")
    beta_axis = _get(values, "sweep.beta", None, _float_list)
    strategy_axis = _get(values, "sweep.strategy", None, _str_list)
    if (beta_axis is None) == (strategy_axis is None):
        raise CliError("sweep needs exactly one axis: sweep.beta or sweep.strategy")
    if beta_axis is not None:
        settings = [(f"beta={b:g}", replace(base, teacher=replace(base.teacher, beta=b)))
                    for b in beta_axis]
    else:
        for strategy in strategy_axis:
            if strategy not in STRATEGIES:
                raise CliError(f"unknown strategy in sweep axis: {strategy!r}")
        settings = [
            (f"strategy={s}", replace(base, teacher=replace(base.teacher, strategy=s)))
            for s in strategy_axis
        ]
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    jobs = []
    labels = []
    for label, setting_config in settings:
        for seed in seeds:
            config = replace(setting_config, seed=seed)
            run_dir = out_root / f"{label.replace('=', '_')}__seed_{seed}"
            jobs.append((config, run_dir, args.quiet))
            labels.append((label, seed))
    # Runs never share mutable state, so they can execute in parallel.
    if args.jobs > 1:
        import multiprocessing

        with multiprocessing.Pool(args.jobs) as pool:
            outcomes = pool.map(_sweep_worker, jobs)
    else:
        outcomes = [_sweep_worker(job) for job in jobs]
    rows = [
        f"{label},{seed},{o['constrained']},{o['unconstrained']},{o['episodes']}"
        for (label, seed), o in zip(labels, outcomes)
    ]
    (out_root / "aggregate.csv").write_text(
        AGGREGATE_HEADER + "\n" + "\n".join(rows) + "\n"
    )
    return 0


def run_theory(args) -> int:
    values = load_config_file(args.config)
    h_list = _get(values, "theory.h_list", None, _int_list)
    if h_list is None:
        raise CliError("theory requires theory.h_list")
    seeds = _get(values, "theory.seeds", None, _int_list)
    if seeds is None:
        raise CliError("theory requires theory.seeds")
    raw_eps = values.get("theory.epsilon", "auto")
    epsilon = None if raw_eps == "auto" else float(raw_eps)
    delta = _get(values, "theory.delta", 0.1, float)
    cap = _get(values, "theory.cap", 10_000_000, int)
    strategies = _get(
        values, "theory.strategies", ["target", "curriculum"], _str_list
    )
    for strategy in strategies:
        if strategy not in THEORY_STRATEGIES:
            raise CliError(f"unknown theory strategy {strategy!r}")
    try:
        results = scaling_report(
            h_list, strategies, seeds, epsilon=epsilon, delta=delta, cap=cap
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "scaling.csv").write_text(scaling_to_csv(results))
    verdict = scaling_verdict(results)
    summary = [
        f"h_list = {','.join(str(h) for h in h_list)}",
        f"strategies = {','.join(strategies)}",
        f"seeds = {len(seeds)}",
        f"epsilon = {raw_eps}",
        f"delta = {delta}",
        verdict,
    ]
    (out_dir / "summary.txt").write_text("\n".join(summary) + "\n")
    if not args.quiet:
        print(verdict)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="budgetrl",
        description="Train and evaluate policies under strict episode cost budgets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", required=True, help="flat key=value config file")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--strategy", choices=STRATEGIES, help="override teacher.strategy")
        p.add_argument("--episodes", type=int, help="override run.total_episodes")
        p.add_argument("--quiet", action="store_true")

    common(sub.add_parser("train", help="run one training experiment"))
    p_eval = sub.add_parser("eval", help="evaluate a saved policy checkpoint")
    common(p_eval, needs_out=False)
    p_eval.add_argument("--checkpoint", required=True, help="policy.bin path")
    p_eval.add_argument("--budget", type=float, default=None,
                        help="evaluation budget (default: per-task target)")
    p_sweep = sub.add_parser("sweep", help="run a sweep over one axis x seeds")
    common(p_sweep)
    p_sweep.add_argument("--jobs", type=int, default=1,
                         help="concurrent runs (default 1)")
    common(sub.add_parser("theory", help="rollout-complexity scaling experiment"))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "train": run_train,
        "eval": run_eval,
        "sweep": run_sweep,
        "theory": run_theory,
    }
    try:
        return handlers[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
