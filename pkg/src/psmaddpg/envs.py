"""Cooperative 2-D particle environments and the multi-ant reward rule.

Agents are point masses in the box [-1, 1]^2 driven by a double integrator
with linear drag.  Each agent sees only a local view: its own position and
velocity plus offsets to landmarks and to the other agents.  Offsets to other
agents are listed nearest first, so a view never reveals which index another
agent carries and swapping two agents' kinematic states swaps exactly their
views.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import IO, Sequence

import numpy as np

from .errors import InvalidSpecError, NumericError, ShapeError

DT = 0.1
DRAG = 0.25
ARENA = 1.0
OBS_NOISE_HALF_WIDTH = 0.01

CONTACT_COST = 5e-4
# survival bonus / control-cost pairs for the rllab multi-ant reward and its redesign
ANT_RLLAB = (1.0, 0.5)
ANT_REDESIGNED = (0.05, 5e-3)


@dataclass(frozen=True)
class EnvSpec:
    n_agents: int
    obs_dims: tuple[int, ...]
    act_dims: tuple[int, ...]
    reward_sharing: bool
    exchangeable: bool
    max_episode_length: int
    action_low: float = -1.0
    action_high: float = 1.0

    def __post_init__(self):
        if self.n_agents < 1 or self.max_episode_length < 1:
            raise InvalidSpecError("agent count and episode length must be positive")
        if len(self.obs_dims) != self.n_agents or len(self.act_dims) != self.n_agents:
            raise InvalidSpecError("need one observation and one action size per agent")
        if min(self.obs_dims) < 1 or min(self.act_dims) < 1:
            raise InvalidSpecError("observation and action sizes must be positive")

    @property
    def uniform(self) -> bool:
        return len(set(self.obs_dims)) == 1 and len(set(self.act_dims)) == 1

    def obs_slice(self, i: int) -> slice:
        start = sum(self.obs_dims[:i])
        return slice(start, start + self.obs_dims[i])

    def act_slice(self, i: int) -> slice:
        start = sum(self.act_dims[:i])
        return slice(start, start + self.act_dims[i])


@dataclass(frozen=True)
class EnvState:
    pos: np.ndarray  # (N, 2)
    vel: np.ndarray  # (N, 2)
    landmarks: np.ndarray  # (L, 2)
    step: int = 0


def multi_ant_reward(v: float, F, a, survival: float = ANT_RLLAB[0],
                     c_ctrl: float = ANT_RLLAB[1]) -> float:
    """Per-leg reward: forward velocity minus contact and control costs plus a survival bonus.

    Contact forces are clipped to [-1, 1] before squaring.  The defaults are
    the rllab constants; pass ``*ANT_REDESIGNED`` for the low-survival variant.
    """
    F = np.clip(np.asarray(F, dtype=np.float64), -1.0, 1.0)
    a = np.asarray(a, dtype=np.float64)
    return float(v - CONTACT_COST * np.dot(F.ravel(), F.ravel())
                 - c_ctrl * np.dot(a.ravel(), a.ravel()) + survival)


class ParticleEnv:
    name = "particle"
    reward_sharing = False
    exchangeable = False

    def __init__(self, n_agents: int = 2, max_episode_length: int = 50,
                 obs_noise: float = 0.0) -> None:
        if n_agents < 1:
            raise InvalidSpecError("need at least one agent")
        self.n_agents = n_agents
        self.obs_noise = obs_noise
        self._noise_rng: np.random.Generator | None = None
        dim = self._obs_dim()
        self.spec = EnvSpec(n_agents, (dim,) * n_agents, (2,) * n_agents,
                            self.reward_sharing, self.exchangeable, max_episode_length)

    # -- to be provided by concrete environments
    def _obs_dim(self) -> int:
        raise NotImplementedError

    def _observe(self, state: EnvState) -> np.ndarray:
        raise NotImplementedError

    def rewards(self, state: EnvState) -> np.ndarray:
        raise NotImplementedError

    # -- shared machinery
    def _other_offsets(self, pos: np.ndarray) -> np.ndarray:
        """(N, N-1, 2) offsets to the other agents, nearest first."""
        n = len(pos)
        out = np.empty((n, n - 1, 2))
        for i in range(n):
            d = np.delete(pos, i, axis=0) - pos[i]
            order = np.lexsort((d[:, 1], d[:, 0], (d * d).sum(axis=1)))
            out[i] = d[order]
        return out

    def observe(self, state: EnvState) -> list[np.ndarray]:
        obs = self._observe(state)
        if self.obs_noise > 0 and self._noise_rng is not None:
            obs = obs + self._noise_rng.uniform(-self.obs_noise, self.obs_noise, obs.shape)
        return list(obs)

    def reset(self, rng: np.random.Generator):
        self._noise_rng = rng
        n = self.n_agents
        pos = rng.uniform(-ARENA, ARENA, size=(n, 2))
        landmarks = rng.uniform(-ARENA, ARENA, size=(n, 2))
        state = EnvState(pos, np.zeros((n, 2)), landmarks, 0)
        return state, self.observe(state)

    def integrate(self, state: EnvState, actions: Sequence[np.ndarray]) -> EnvState:
        acts = np.asarray(actions, dtype=np.float64)
        if acts.shape != (self.n_agents, 2):
            raise ShapeError(f"expected actions of shape ({self.n_agents}, 2), got {acts.shape}")
        if np.isnan(acts).any():
            raise NumericError("NaN action")
        acts = np.clip(acts, self.spec.action_low, self.spec.action_high)
        pos = state.pos + DT * state.vel
        vel = state.vel + DT * acts - DRAG * state.vel
        # walls are inelastic: clamp position, kill the normal velocity
        hit = np.abs(pos) > ARENA
        pos = np.clip(pos, -ARENA, ARENA)
        vel = np.where(hit, 0.0, vel)
        return EnvState(pos, vel, state.landmarks, state.step + 1)

    def step(self, state: EnvState, actions: Sequence[np.ndarray]):
        if state.step >= self.spec.max_episode_length:
            raise InvalidSpecError("episode already finished; call reset")
        nxt = self.integrate(state, actions)
        done = nxt.step >= self.spec.max_episode_length
        return nxt, self.observe(nxt), self.rewards(nxt), done


class CoopSpread(ParticleEnv):
    """N agents should jointly cover N landmarks; everybody gets the same reward.

    Shared reward: minus the sum over landmarks of the distance to the
    closest agent.
    """

    name = "coop_spread"
    reward_sharing = True
    exchangeable = True

    def _obs_dim(self) -> int:
        return 4 + 2 * self.n_agents + 2 * (self.n_agents - 1)

    def _observe(self, state: EnvState) -> np.ndarray:
        n = self.n_agents
        lm = (state.landmarks[None, :, :] - state.pos[:, None, :]).reshape(n, -1)
        others = self._other_offsets(state.pos).reshape(n, -1)
        return np.concatenate([state.pos, state.vel, lm, others], axis=1)

    def rewards(self, state: EnvState) -> np.ndarray:
        d = np.linalg.norm(state.landmarks[:, None, :] - state.pos[None, :, :], axis=2)
        return np.full(self.n_agents, -d.min(axis=1).sum())


class IdTaggedSpread(CoopSpread):
    """CoopSpread with a one-hot agent id appended to every view."""

    name = "id_tagged_spread"
    exchangeable = False

    def _obs_dim(self) -> int:
        return super()._obs_dim() + self.n_agents

    def _observe(self, state: EnvState) -> np.ndarray:
        return np.concatenate([super()._observe(state), np.eye(self.n_agents)], axis=1)


class AssignedTargets(ParticleEnv):
    """Agent i is paid minus its own distance to landmark i."""

    name = "assigned_targets"

    def _obs_dim(self) -> int:
        return 6 + 2 * (self.n_agents - 1)

    def _observe(self, state: EnvState) -> np.ndarray:
        own = state.landmarks - state.pos
        others = self._other_offsets(state.pos).reshape(self.n_agents, -1)
        return np.concatenate([state.pos, state.vel, own, others], axis=1)

    def rewards(self, state: EnvState) -> np.ndarray:
        return -np.linalg.norm(state.landmarks - state.pos, axis=1)


ENVIRONMENTS = {cls.name: cls for cls in (CoopSpread, AssignedTargets, IdTaggedSpread)}


def make_env(name: str, n_agents: int = 2, max_episode_length: int = 50,
             obs_noise: float = 0.0) -> ParticleEnv:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise InvalidSpecError(
            f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(n_agents, max_episode_length, obs_noise)


def swap_agents(state: EnvState, i: int, j: int) -> EnvState:
    pos, vel = state.pos.copy(), state.vel.copy()
    pos[[i, j]] = pos[[j, i]]
    vel[[i, j]] = vel[[j, i]]
    return replace(state, pos=pos, vel=vel)


TRAJECTORY_HEADER = ("episode", "step", "agent", "ox", "oy", "ax", "ay", "reward")


def write_trajectory(fh: IO[str], rows) -> None:
    """Write ``(episode, step, agent, ox, oy, ax, ay, reward)`` rows as CSV with a header."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRAJECTORY_HEADER)
    for episode, step, agent, ox, oy, ax, ay, reward in rows:
        w.writerow([episode, step, agent, repr(float(ox)), repr(float(oy)),
                    repr(float(ax)), repr(float(ay)), repr(float(reward))])
