"""Reference controllers used to bracket learned returns.

* uniform random actions: the lower reference;
* greedy proportional control: every agent steers toward the landmark
  nearest to it, ``a = clip(KP * offset)``, ignoring its teammates;
* assignment control: a full-state controller that first solves the
  agent-to-landmark assignment, then applies PD control.  It is much stronger
  than anything a local-view policy can be expected to reach in a short run
  and is reported for context only.
"""

from __future__ import annotations

import itertools

import numpy as np

from .envs import AssignedTargets, EnvState, ParticleEnv

KP = 4.0
ASSIGN_KP = 8.0
ASSIGN_KD = 4.0


def assignment(env: ParticleEnv, state: EnvState) -> np.ndarray:
    """Landmark index per agent: fixed for assigned targets, else min total distance."""
    n = env.n_agents
    if isinstance(env, AssignedTargets):
        return np.arange(n)
    d = np.linalg.norm(state.pos[:, None, :] - state.landmarks[None, :, :], axis=2)
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(n)):
        cost = d[np.arange(n), perm].sum()
        if cost < best_cost:
            best, best_cost = perm, cost
    return np.asarray(best)


def greedy_targets(env: ParticleEnv, state: EnvState) -> np.ndarray:
    """Own landmark for assigned targets, otherwise the currently nearest one."""
    if isinstance(env, AssignedTargets):
        return np.arange(env.n_agents)
    d = np.linalg.norm(state.pos[:, None, :] - state.landmarks[None, :, :], axis=2)
    return d.argmin(axis=1)


def greedy_actions(env: ParticleEnv, state: EnvState) -> np.ndarray:
    err = state.landmarks[greedy_targets(env, state)] - state.pos
    return np.clip(KP * err, -1.0, 1.0)


def assignment_actions(env: ParticleEnv, state: EnvState, targets: np.ndarray) -> np.ndarray:
    err = state.landmarks[targets] - state.pos
    return np.clip(ASSIGN_KP * err - ASSIGN_KD * state.vel, -1.0, 1.0)


def _rollout_totals(env: ParticleEnv, episodes: int, rng: np.random.Generator, policy,
                    plan=None) -> np.ndarray:
    out = np.empty(episodes)
    for e in range(episodes):
        state, _ = env.reset(rng)
        ctx = plan(env, state) if plan is not None else None
        total, done = 0.0, False
        while not done:
            acts = policy(env, state, ctx, rng)
            state, _, r, done = env.step(state, acts)
            total += r.sum()
        out[e] = total
    return out


def greedy_returns(env: ParticleEnv, episodes: int, rng: np.random.Generator) -> np.ndarray:
    """Total (summed over agents) return of the greedy controller per episode."""
    return _rollout_totals(env, episodes, rng, lambda e, s, _, __: greedy_actions(e, s))


def assignment_returns(env: ParticleEnv, episodes: int, rng: np.random.Generator) -> np.ndarray:
    return _rollout_totals(env, episodes, rng,
                           lambda e, s, targets, _: assignment_actions(e, s, targets),
                           plan=assignment)


def random_returns(env: ParticleEnv, episodes: int, rng: np.random.Generator) -> np.ndarray:
    """Total return of a policy drawing every action uniformly from [-1, 1]."""
    return _rollout_totals(env, episodes, rng,
                           lambda e, s, _, r: r.uniform(-1.0, 1.0, size=(e.n_agents, 2)))


def gap_closure(value: float, low: float, high: float) -> float:
    return (value - low) / (high - low)
