import copy
import io
import math

import numpy as np
import pytest

from psmaddpg import envs
from psmaddpg.envs import (ANT_REDESIGNED, AssignedTargets, CoopSpread, EnvState,
                           IdTaggedSpread, make_env, multi_ant_reward, swap_agents)
from psmaddpg.errors import InvalidSpecError, NumericError


ALL_ENVS = [CoopSpread, AssignedTargets, IdTaggedSpread]


def placed(pos, landmarks, vel=None, step=0):
    pos = np.asarray(pos, dtype=float)
    vel = np.zeros_like(pos) if vel is None else np.asarray(vel, dtype=float)
    return EnvState(pos, vel, np.asarray(landmarks, dtype=float), step)


@pytest.mark.parametrize("cls", ALL_ENVS)
@pytest.mark.parametrize("n", [1, 2, 4])
def test_reset_shapes_and_determinism(cls, n):
    env = cls(n, 20)
    s1, o1 = env.reset(np.random.default_rng(3))
    s2, o2 = env.reset(np.random.default_rng(3))
    assert len(o1) == n
    for i in range(n):
        assert o1[i].shape == (env.spec.obs_dims[i],)
        assert np.array_equal(o1[i], o2[i])
    assert np.all(s1.vel == 0) and s1.step == 0
    assert np.all(np.abs(s1.pos) <= 1) and np.all(np.abs(s1.landmarks) <= 1)


@pytest.mark.parametrize("cls", ALL_ENVS)
def test_offsets_are_translation_invariant(cls, rng):
    env = cls(3, 10)
    state, _ = env.reset(rng)
    shift = np.array([0.3, -0.7])
    moved = EnvState(state.pos + shift, state.vel, state.landmarks + shift, 0)
    before, after = env.observe(state), env.observe(moved)
    for b, a in zip(before, after):
        # everything past own position and velocity is relative
        np.testing.assert_allclose(a[4:], b[4:], rtol=0, atol=1e-12)
        np.testing.assert_allclose(a[:2], b[:2] + shift, atol=1e-12)


def test_zero_action_at_rest_stays_put(rng):
    env = CoopSpread(2, 10)
    state, _ = env.reset(rng)
    nxt, _, _, _ = env.step(state, np.zeros((2, 2)))
    assert np.array_equal(nxt.pos, state.pos) and np.array_equal(nxt.vel, state.vel)


def test_double_integrator_update():
    env = CoopSpread(1, 10)
    s = placed([[0.1, -0.2]], [[0.0, 0.0]], vel=[[0.4, 0.2]])
    nxt, _, _, _ = env.step(s, [[1.0, -0.5]])
    np.testing.assert_allclose(nxt.pos, [[0.1 + 0.1 * 0.4, -0.2 + 0.1 * 0.2]])
    np.testing.assert_allclose(nxt.vel, [[0.4 + 0.1 - 0.25 * 0.4, 0.2 - 0.05 - 0.25 * 0.2]])


def test_actions_are_clipped():
    env = CoopSpread(1, 10)
    s = placed([[0.0, 0.0]], [[0.5, 0.5]])
    a, _, _, _ = env.step(s, [[5.0, -7.0]])
    b, _, _, _ = env.step(s, [[1.0, -1.0]])
    assert np.array_equal(a.vel, b.vel)


def test_nan_action_rejected():
    env = CoopSpread(1, 10)
    with pytest.raises(NumericError):
        env.step(placed([[0.0, 0.0]], [[0.5, 0.5]]), [[np.nan, 0.0]])


def test_walls_keep_agents_inside():
    env = CoopSpread(1, 200)
    s = placed([[0.95, 0.0]], [[0.0, 0.0]])
    for _ in range(100):
        s, _, _, _ = env.step(s, [[1.0, 1.0]])
        assert np.all(np.abs(s.pos) <= 1.0)


def test_coop_spread_reward_by_hand():
    env = CoopSpread(2, 10)
    # agent 0 sits on landmark 0, agent 1 is 0.3 away from landmark 1
    s = placed([[0.0, 0.0], [0.5, 0.8]], [[0.0, 0.0], [0.5, 0.5]])
    np.testing.assert_allclose(env.rewards(s), [-0.3, -0.3], rtol=1e-12)


def test_assigned_targets_reward_by_hand():
    env = AssignedTargets(2, 10)
    s = placed([[0.0, 0.0], [0.5, 0.8]], [[0.3, 0.4], [0.5, 0.5]])
    np.testing.assert_allclose(env.rewards(s), [-0.5, -0.3], rtol=1e-12)


@pytest.mark.parametrize("cls", [CoopSpread, IdTaggedSpread])
def test_shared_reward_every_step(cls, rng):
    env = cls(3, 30)
    for _ in range(20):
        state, _ = env.reset(rng)
        done = False
        while not done:
            state, _, r, done = env.step(state, rng.uniform(-1, 1, size=(3, 2)))
            assert np.all(r == r[0])


@pytest.mark.parametrize("cls", ALL_ENVS)
def test_episode_length_and_reward_bound(cls, rng):
    env = cls(3, 17)
    state, _ = env.reset(rng)
    steps, done = 0, False
    while not done:
        state, _, r, done = env.step(state, rng.uniform(-1.5, 1.5, size=(3, 2)))
        steps += 1
        assert np.all(np.abs(r) <= 2 * math.sqrt(2) * 3)
    assert steps == 17
    with pytest.raises(InvalidSpecError):
        env.step(state, np.zeros((3, 2)))


@pytest.mark.parametrize("n,i,j", [(2, 0, 1), (3, 0, 2), (4, 1, 3), (5, 0, 4)])
def test_swap_exchangeability(n, i, j, rng):
    env = CoopSpread(n, 10)
    state, _ = env.reset(rng)
    state = EnvState(state.pos, rng.uniform(-0.3, 0.3, size=(n, 2)), state.landmarks, 0)
    before = env.observe(state)
    after = env.observe(swap_agents(state, i, j))
    assert np.array_equal(after[i], before[j])
    assert np.array_equal(after[j], before[i])
    for k in range(n):
        if k not in (i, j):
            assert np.array_equal(after[k], before[k])


def test_id_tag_breaks_exchangeability(rng):
    env = IdTaggedSpread(2, 10)
    assert env.spec.reward_sharing and not env.spec.exchangeable
    state, obs = env.reset(rng)
    assert obs[0][-2:].tolist() == [1.0, 0.0] and obs[1][-2:].tolist() == [0.0, 1.0]
    after = env.observe(swap_agents(state, 0, 1))
    assert not np.array_equal(after[0], obs[1])


def test_spec_flags():
    assert CoopSpread(2).spec.reward_sharing and CoopSpread(2).spec.exchangeable
    spec = AssignedTargets(3).spec
    assert not spec.reward_sharing and not spec.exchangeable and spec.uniform
    assert make_env("id_tagged_spread", 3).spec.obs_dims == (4 + 6 + 4 + 3,) * 3
    with pytest.raises(InvalidSpecError):
        make_env("water_world")


def test_observation_noise_bounded(rng):
    env = CoopSpread(2, 10, obs_noise=envs.OBS_NOISE_HALF_WIDTH)
    state, noisy = env.reset(rng)
    clean = CoopSpread(2, 10)._observe(state)
    diff = np.abs(np.array(noisy) - clean)
    assert diff.max() <= envs.OBS_NOISE_HALF_WIDTH and diff.max() > 0


# -- multi-ant reward


def test_ant_reward_all_zero_is_survival():
    assert multi_ant_reward(0.0, [0.0] * 18, [0.0] * 8, survival=1.0) == 1.0


def test_ant_reward_clips_contact_forces():
    assert multi_ant_reward(0.0, [10.0, -10.0], [0.0, 0.0], survival=0.0) == pytest.approx(-0.001,
                                                                                         rel=1e-12)


def test_ant_reward_control_cost():
    r = multi_ant_reward(0.5, [0.0], [1.0, 2.0], survival=1.0, c_ctrl=0.5)
    assert r == pytest.approx(0.5 - 0.5 * 5 + 1.0)


def test_ant_standing_still_redesigned_reward():
    per_step = multi_ant_reward(0.0, np.zeros(18), np.zeros(8), *ANT_REDESIGNED)
    per_agent = math.fsum([per_step] * 500)
    assert per_agent == 25.0
    assert math.fsum([per_agent] * 6) == 150.0


def test_trajectory_dump_format():
    buf = io.StringIO()
    envs.write_trajectory(buf, [(0, 0, 1, 0.5, -0.25, 1.0, 0.0, -0.75)])
    assert buf.getvalue().splitlines() == ["episode,step,agent,ox,oy,ax,ay,reward",
                                           "0,0,1,0.5,-0.25,1.0,0.0,-0.75"]
