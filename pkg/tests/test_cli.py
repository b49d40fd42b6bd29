import csv
import os
from dataclasses import replace

import numpy as np
import pytest

from psmaddpg.cli import (EXIT_CONFIG, EXIT_OK, METRICS_HEADER, dump_config, main,
                          parse_config, run)
from psmaddpg.errors import ConfigError
from psmaddpg.evaluation import moving_average
from psmaddpg.trainers import TrainConfig

from oracles import prefix_sum_moving_average

TINY = """\
# small run
env = coop_spread
n_agents = 2
total_steps = 400
max_episode_length = 10
warmup = 50
batch_size = 16
actor_hidden = 16
critic_hidden = 16
v2_shared_sizes = 16
v2_head_sizes = 8
eps_decay_steps = 300
eval_every = 10
eval_episodes = 3
seed = 11
"""


def tiny(tmp_path, extra="", sub="out"):
    out = tmp_path / sub
    out.mkdir()
    spec = parse_config(TINY + extra)
    return replace(spec, output_dir=str(out)), out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- parsing


def test_empty_config_gives_defaults():
    spec = parse_config("")
    assert spec.train == TrainConfig()
    assert (spec.train.variant, spec.n_agents, spec.env) == ("v0", 2, "coop_spread")
    assert (spec.train.gamma, spec.train.tau, spec.train.batch_size) == (0.99, 0.01, 64)


def test_values_and_comments():
    spec = parse_config("gamma = 0.99  # discount\n\nactor_hidden = 32, 16\n"
                        "dump_trajectory = yes\nvariant = v2\n")
    assert spec.train.gamma == 0.99 and spec.train.actor_hidden == (32, 16)
    assert spec.dump_trajectory is True and spec.train.variant == "v2"


@pytest.mark.parametrize("text,line", [
    ("gamma = 0.9\nvariannt = v0\n", 2),
    ("batch_size = lots\n", 1),
    ("\n\ngamma = 2\n", 3),
    ("env = water_world\n", 1),
    ("variant = v0\nvariant = v1\n", 2),
    ("just words\n", 1),
    ("variant = v4\n", 1),
])
def test_config_errors_name_the_line(text, line):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")


def test_config_echo_round_trips():
    spec = parse_config(TINY + "variant = maddpg\nobs_noise = 0.01\n")
    text = dump_config(spec)
    again = parse_config(text)
    assert again == spec
    assert len(text.splitlines()) == len(list(spec.items()))


# -- metrics


def test_metrics_rows_order_and_moving_average(tmp_path):
    spec, out = tiny(tmp_path)
    assert run(spec) == EXIT_OK
    rows = read_rows(out / "metrics.csv")
    assert tuple(rows[0]) == METRICS_HEADER
    body = rows[1:]
    keys = [(r[6], int(r[0]), int(r[1])) for r in body]
    assert keys == sorted(keys) and len(set(keys)) == len(keys)
    for phase in ("train", "eval"):
        for agent in (0, 1):
            sel = [r for r in body if r[6] == phase and int(r[1]) == agent]
            ret = [float(r[2]) for r in sel]
            ma = [float(r[4]) for r in sel]
            np.testing.assert_allclose(ma, prefix_sum_moving_average(ret, 100), atol=1e-12)
            assert ma == moving_average(ret, 100).tolist()
    train = [r for r in body if r[6] == "train"]
    assert len(train) == 2 * 40
    # shared reward: both agents have the same return, total is their sum
    for r in train:
        assert float(r[3]) == pytest.approx(2 * float(r[2]))
    evals = sorted({int(r[0]) for r in body if r[6] == "eval"})
    assert evals == [10, 20, 30, 40]
    assert all(float(r[5]) == 0.0 for r in body if r[6] == "eval")


def test_run_writes_artifacts(tmp_path):
    spec, out = tiny(tmp_path, "dump_trajectory = true\n")
    assert run(spec) == EXIT_OK
    names = set(os.listdir(out))
    assert {"metrics.csv", "config.echo", "nets", "trajectory.csv"} <= names
    assert parse_config((out / "config.echo").read_text()) == replace(spec, output_dir=str(out))
    assert len(os.listdir(out / "nets")) == 4
    traj = read_rows(out / "trajectory.csv")
    assert traj[0] == ["episode", "step", "agent", "ox", "oy", "ax", "ay", "reward"]
    assert len(traj) == 1 + 3 * 10 * 2


def test_run_is_deterministic(tmp_path):
    a, out_a = tiny(tmp_path, sub="a")
    b, out_b = tiny(tmp_path, sub="b")
    assert run(a) == run(b) == EXIT_OK
    assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()


def test_compare_mode_ratio(tmp_path):
    spec, out = tiny(tmp_path, "timing_steps = 5\n")
    assert run(spec, "compare") == EXIT_OK
    lines = (out / "structural.txt").read_text().splitlines()
    assert "param_ratio maddpg/v0 2.0" in lines
    assert "metrics.csv" not in os.listdir(out)


def test_missing_output_dir_fails_without_files(tmp_path):
    spec = replace(parse_config(TINY), output_dir=str(tmp_path / "nope"))
    assert run(spec) == EXIT_CONFIG
    assert os.listdir(tmp_path) == []


# -- main


def test_main_flags(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY)
    out = tmp_path / "o"
    out.mkdir()
    assert main(["--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert (out / "metrics.csv").exists()
    assert main(["--config", str(tmp_path / "absent.cfg"), "--out", str(out)]) == EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("tau = 0\n")
    assert main(["--config", str(bad), "--out", str(out)]) == EXIT_CONFIG
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("psmaddpg: config error: line 1:")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "missing")]) == EXIT_CONFIG


def test_seed_sweep(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY)
    out = tmp_path / "sweep"
    out.mkdir()
    assert main(["--config", str(cfg), "--out", str(out), "--seeds", "1,2"]) == EXIT_OK
    one = (out / "seed_1" / "metrics.csv").read_bytes()
    two = (out / "seed_2" / "metrics.csv").read_bytes()
    assert one != two
    echo = parse_config((out / "seed_1" / "config.echo").read_text())
    assert echo.train.seed == 1
    solo = tmp_path / "solo"
    solo.mkdir()
    assert main(["--config", str(cfg), "--out", str(solo)]) == EXIT_OK
    cfg.write_text(TINY.replace("seed = 11", "seed = 2"))
    solo2 = tmp_path / "solo2"
    solo2.mkdir()
    assert main(["--config", str(cfg), "--out", str(solo2)]) == EXIT_OK
    assert (solo2 / "metrics.csv").read_bytes() == two
    assert main(["--out", str(out), "--seeds", "1,x"]) == EXIT_CONFIG
