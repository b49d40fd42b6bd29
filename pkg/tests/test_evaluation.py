import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psmaddpg.envs import AssignedTargets, CoopSpread
from psmaddpg.errors import InvalidSpecError
from psmaddpg.evaluation import (evaluate, format_structural, moving_average, param_ratio,
                                 structural_report)
from psmaddpg.trainers import Ensemble, TrainConfig

from oracles import prefix_sum_moving_average


def test_zero_output_actor_returns_standing_still_reward():
    env = CoopSpread(2, 12)
    ens = Ensemble(env.spec, TrainConfig(variant="v0", actor_hidden=(4,)))
    ens.actors[0].params[...] = 0.0
    state, _ = CoopSpread(2, 12).reset(np.random.default_rng(8))
    # hand-computed reward of the frozen configuration
    r = -sum(min(math.dist(p, lm) for p in state.pos) for lm in state.landmarks)
    total = 0.0
    for _ in range(12):
        total += r
    (rec,) = evaluate(ens, env, 1, np.random.default_rng(8))
    assert rec.steps == 12
    assert rec.returns.tolist() == pytest.approx([total, total], rel=1e-12)
    assert rec.total == rec.returns.sum()


def test_same_rng_same_records():
    env = CoopSpread(3, 15)
    ens = Ensemble(env.spec, TrainConfig(variant="v2"))
    rng = np.random.default_rng(4)
    a = evaluate(ens, env, 3, copy.deepcopy(rng))
    b = evaluate(ens, env, 3, rng)
    assert [r.returns.tolist() for r in a] == [r.returns.tolist() for r in b]
    assert [r.episode for r in a] == [0, 1, 2]


def test_zero_episodes_and_no_mutation():
    env = CoopSpread(2, 10)
    ens = Ensemble(env.spec, TrainConfig(variant="maddpg"))
    digest = ens.state_digest()
    assert evaluate(ens, env, 0, np.random.default_rng(0)) == []
    evaluate(ens, env, 2, np.random.default_rng(0))
    assert ens.state_digest() == digest


def test_incompatible_env_rejected():
    ens = Ensemble(CoopSpread(2, 10).spec, TrainConfig())
    with pytest.raises(InvalidSpecError):
        evaluate(ens, AssignedTargets(2, 10), 1, np.random.default_rng(0))


def test_trajectory_rows():
    env = CoopSpread(2, 5)
    rows = []
    evaluate(Ensemble(env.spec, TrainConfig()), env, 2, np.random.default_rng(0), rows)
    assert len(rows) == 2 * 5 * 2
    assert rows[0][:3] == (0, 0, 0) and rows[-1][:3] == (1, 4, 1)


# -- moving average


def test_moving_average_examples():
    assert moving_average([0.0, 2.0], 2).tolist() == [0.0, 1.0]
    assert moving_average([3.5] * 7, 3).tolist() == [3.5] * 7
    assert moving_average([], 5).size == 0
    with pytest.raises(InvalidSpecError):
        moving_average([1.0], 0)


def test_moving_average_matches_prefix_sums(rng):
    x = rng.normal(0, 10, size=1000)
    for w in (1, 7, 100, 2000):
        np.testing.assert_allclose(moving_average(x, w), prefix_sum_moving_average(x, w),
                                   rtol=0, atol=1e-12)


series = st.lists(st.integers(-1000, 1000).map(float), min_size=1, max_size=50)


@settings(max_examples=80, deadline=None)
@given(series, st.integers(1, 10), st.integers(-500, 500))
def test_moving_average_shift_equivariant_and_bounded(x, w, c):
    # integer-valued data keeps the window sums exact
    base = moving_average(x, w)
    shifted = moving_average([v + c for v in x], w)
    np.testing.assert_allclose(shifted, base + c, rtol=0, atol=1e-9)
    for k, m in enumerate(base):
        window = x[max(0, k + 1 - w):k + 1]
        assert min(window) - 1e-9 <= m <= max(window) + 1e-9


# -- structural comparison


def configs(**kw):
    return [TrainConfig(variant=v, **kw) for v in ("maddpg", "v0", "v1", "v2")]


@pytest.mark.parametrize("n", [2, 4, 6])
def test_structural_counts(n):
    env = CoopSpread(n, 10)
    rows = {r.variant: r for r in structural_report(configs(), env, timing_steps=0)}
    assert {v: r.nets_updated for v, r in rows.items()} == {
        "maddpg": 2 * n, "v0": 2, "v1": n + 1, "v2": 2}
    assert param_ratio(rows.values(), "maddpg", "v0") == n
    actor, critic = rows["v0"].actor_params, rows["v0"].critic_params
    assert rows["v1"].total_params == actor + n * critic
    assert rows["maddpg"].total_params == n * (actor + critic)
    for r in rows.values():
        assert math.isnan(r.seconds_per_1000)


def test_format_structural_n2_ratio():
    rows = structural_report(configs(), CoopSpread(2, 10), timing_steps=0)
    text = format_structural(rows, 2)
    assert "param_ratio maddpg/v0 2.0" in text.splitlines()
    assert text.splitlines()[0] == "agents 2"


def test_wall_clock_ordering_n6():
    rows = {r.variant: r for r in structural_report(configs(), CoopSpread(6, 10),
                                                    timing_steps=200)}
    t = {v: r.seconds_per_1000 for v, r in rows.items()}
    assert t["v0"] < t["v2"] <= t["v1"] < t["maddpg"], t
