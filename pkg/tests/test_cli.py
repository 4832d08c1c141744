"""Command-line interface: subcommands, outputs, error paths."""

import pytest

from budgetrl.cli import main, parse_flat_config, CliError
from budgetrl.harness import METRICS_HEADER
from budgetrl.policy import load_policy

TREE_CFG = """
env.kind = binary_tree
env.depth = 4
teacher.strategy = curltrac
teacher.beta = 0.5
teacher.k = 10
learner.batch_size = 5
run.total_episodes = 1000
run.eval_interval = 500
run.eval_episodes = 10
run.seed = 3
"""

GRID_CFG = """
env.kind = puddle_single
env.horizon = 40
teacher.strategy = unconstrained
learner.hidden_width = 16
run.total_episodes = 50
run.eval_interval = 50
run.eval_episodes = 2
run.seed = 1
"""

THEORY_CFG = """
theory.h_list = 4,6
theory.epsilon = auto
theory.delta = 0.1
theory.seeds = 0,1,2,3,4,5,6,7,8,9
theory.strategies = target,curriculum
"""

SWEEP_CFG = """
env.kind = binary_tree
env.depth = 3
teacher.strategy = curltrac
run.total_episodes = 60
run.eval_interval = 60
run.eval_episodes = 5
sweep.beta = 0.1,0.5,0.9
sweep.seeds = 1,2,3
"""


def write(path, text):
    path.write_text(text)
    return str(path)


class TestConfigParsing:
    def test_parse_and_comments(self):
        values = parse_flat_config("# note\nenv.kind = binary_tree\n\nrun.seed = 4 # tail\n")
        assert values == {"env.kind": "binary_tree", "run.seed": "4"}

    def test_unknown_key_rejected(self):
        with pytest.raises(CliError):
            parse_flat_config("env.knid = binary_tree\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(CliError):
            parse_flat_config("run.seed = 1\nrun.seed = 2\n")

    def test_malformed_line_rejected(self):
        with pytest.raises(CliError):
            parse_flat_config("env.kind binary_tree\n")


class TestTrain:
    def test_run_writes_outputs(self, tmp_path):
        cfg = write(tmp_path / "t.cfg", TREE_CFG)
        out = tmp_path / "run"
        assert main(["train", "--config", cfg, "--out", str(out), "--quiet"]) == 0
        metrics = (out / "metrics.csv").read_text()
        lines = metrics.splitlines()
        assert lines[0] == METRICS_HEADER
        assert len(lines) == 1 + 1000 // 5
        assert (out / "summary.txt").exists()
        policy = load_policy(out / "policy.bin")
        assert policy.logits.shape == (2**5 - 1, 2)

    def test_rerun_byte_identical(self, tmp_path):
        cfg = write(tmp_path / "t.cfg", TREE_CFG)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["train", "--config", cfg, "--out", str(out_a), "--quiet"]) == 0
        assert main(["train", "--config", cfg, "--out", str(out_b), "--quiet"]) == 0
        assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()
        assert (out_a / "policy.bin").read_bytes() == (out_b / "policy.bin").read_bytes()

    def test_seed_override_changes_stream(self, tmp_path):
        cfg = write(tmp_path / "t.cfg", TREE_CFG)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["train", "--config", cfg, "--out", str(out_a), "--quiet"])
        main(["train", "--config", cfg, "--out", str(out_b), "--seed", "99", "--quiet"])
        assert (out_a / "metrics.csv").read_bytes() != (out_b / "metrics.csv").read_bytes()

    def test_missing_config_names_path(self, tmp_path, capsys):
        missing = tmp_path / "nope.cfg"
        code = main(["train", "--config", str(missing), "--out", str(tmp_path / "o")])
        assert code != 0
        err = capsys.readouterr().err
        assert "nope.cfg" in err

    def test_episode_and_strategy_overrides(self, tmp_path):
        cfg = write(tmp_path / "t.cfg", TREE_CFG)
        out = tmp_path / "o"
        assert main([
            "train", "--config", cfg, "--out", str(out),
            "--episodes", "100", "--strategy", "target", "--quiet",
        ]) == 0
        lines = (out / "metrics.csv").read_text().splitlines()
        assert len(lines) == 1 + 100 // 5
        assert all(line.split(",")[2] == "0" for line in lines[1:])

    def test_grid_train_runs(self, tmp_path):
        cfg = write(tmp_path / "g.cfg", GRID_CFG)
        out = tmp_path / "o"
        assert main(["train", "--config", cfg, "--out", str(out), "--quiet"]) == 0
        assert (out / "metrics.csv").exists()


class TestEval:
    def test_eval_checkpoint(self, tmp_path, capsys):
        cfg = write(tmp_path / "t.cfg", TREE_CFG)
        out = tmp_path / "o"
        main(["train", "--config", cfg, "--out", str(out), "--quiet"])
        code = main([
            "eval", "--config", cfg, "--checkpoint", str(out / "policy.bin"),
        ])
        assert code == 0
        printed = capsys.readouterr().out
        assert "eval_constrained" in printed and "eval_unconstrained" in printed

    def test_eval_missing_checkpoint(self, tmp_path, capsys):
        cfg = write(tmp_path / "t.cfg", TREE_CFG)
        code = main(["eval", "--config", cfg, "--checkpoint", str(tmp_path / "x.bin")])
        assert code != 0
        assert "x.bin" in capsys.readouterr().err


class TestSweep:
    def test_beta_sweep_layout(self, tmp_path):
        cfg = write(tmp_path / "s.cfg", SWEEP_CFG)
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", cfg, "--out", str(out), "--quiet"]) == 0
        run_dirs = [p for p in out.iterdir() if p.is_dir()]
        assert len(run_dirs) == 9
        agg = (out / "aggregate.csv").read_text().splitlines()
        assert agg[0] == (
            "setting,seed,final_eval_constrained,final_eval_unconstrained,episodes"
        )
        assert len(agg) == 10
        settings = {line.split(",")[0] for line in agg[1:]}
        assert settings == {"beta=0.1", "beta=0.5", "beta=0.9"}

    def test_strategy_sweep(self, tmp_path):
        text = SWEEP_CFG.replace("sweep.beta = 0.1,0.5,0.9",
                                 "sweep.strategy = target,unconstrained,curltrac")
        text = text.replace("sweep.seeds = 1,2,3", "sweep.seeds = 1")
        cfg = write(tmp_path / "s.cfg", text)
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", cfg, "--out", str(out), "--quiet"]) == 0
        agg = (out / "aggregate.csv").read_text().splitlines()
        assert len(agg) == 4

    def test_empty_axis_rejected(self, tmp_path, capsys):
        text = SWEEP_CFG.replace("sweep.beta = 0.1,0.5,0.9\n", "")
        cfg = write(tmp_path / "s.cfg", text)
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) != 0
        assert "axis" in capsys.readouterr().err

    def test_two_axes_rejected(self, tmp_path):
        text = SWEEP_CFG + "sweep.strategy = target\n"
        cfg = write(tmp_path / "s.cfg", text)
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) != 0

    def test_parallel_jobs_match_sequential(self, tmp_path):
        text = SWEEP_CFG.replace("sweep.beta = 0.1,0.5,0.9", "sweep.beta = 0.2,0.8")
        text = text.replace("sweep.seeds = 1,2,3", "sweep.seeds = 1,2")
        cfg = write(tmp_path / "s.cfg", text)
        seq, par = tmp_path / "seq", tmp_path / "par"
        assert main(["sweep", "--config", cfg, "--out", str(seq), "--quiet"]) == 0
        assert main(["sweep", "--config", cfg, "--out", str(par), "--jobs", "2", "--quiet"]) == 0
        assert (seq / "aggregate.csv").read_bytes() == (par / "aggregate.csv").read_bytes()


class TestTheory:
    def test_table_shape_and_verdict(self, tmp_path):
        cfg = write(tmp_path / "th.cfg", THEORY_CFG)
        out = tmp_path / "theory"
        assert main(["theory", "--config", cfg, "--out", str(out), "--quiet"]) == 0
        lines = (out / "scaling.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 2 * 10
        summary = (out / "summary.txt").read_text()
        assert "verdict:" in summary

    def test_epsilon_zero_rejected(self, tmp_path, capsys):
        cfg = write(tmp_path / "th.cfg", THEORY_CFG.replace("auto", "0"))
        assert main(["theory", "--config", cfg, "--out", str(tmp_path / "o")]) != 0
        assert "epsilon" in capsys.readouterr().err

    def test_reruns_identical(self, tmp_path):
        cfg = write(tmp_path / "th.cfg", THEORY_CFG)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["theory", "--config", cfg, "--out", str(out_a), "--quiet"])
        main(["theory", "--config", cfg, "--out", str(out_b), "--quiet"])
        assert (out_a / "scaling.csv").read_bytes() == (out_b / "scaling.csv").read_bytes()
