"""Policy evaluation, moving-average returns and cross-variant structural comparison."""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .envs import ParticleEnv
from .errors import InvalidSpecError
from .memory import ReplayMemory, Transition
from .records import EpisodeRecord
from .trainers import Ensemble, TrainConfig, learn

__all__ = ["EpisodeRecord", "evaluate", "moving_average", "structural_report",
           "format_structural", "StructuralRow"]


def evaluate(ens: Ensemble, env: ParticleEnv, episodes: int, rng: np.random.Generator,
             trajectory: list | None = None) -> list[EpisodeRecord]:
    """Roll out the noise-free policy; nothing is learned or stored.

    If ``trajectory`` is a list, per-agent rows
    ``(episode, step, agent, x, y, ax, ay, reward)`` are appended to it.
    """
    if ens.spec != env.spec:
        raise InvalidSpecError("ensemble was built for a different environment spec")
    records = []
    for e in range(episodes):
        state, obs = env.reset(rng)
        returns = np.zeros(env.n_agents)
        done, t = False, 0
        while not done:
            actions = ens.act_all(obs, 0.0)
            state, obs, rewards, done = env.step(state, actions)
            if trajectory is not None:
                for i in range(env.n_agents):
                    trajectory.append((e, t, i, state.pos[i, 0], state.pos[i, 1],
                                       actions[i][0], actions[i][1], rewards[i]))
            returns += rewards
            t += 1
        records.append(EpisodeRecord.from_returns(e, returns, t))
    return records


def moving_average(returns: Sequence[float], window: int) -> np.ndarray:
    """Mean of the trailing ``window`` values; the first entries average what exists."""
    if window < 1:
        raise InvalidSpecError("window must be at least 1")
    x = np.asarray(returns, dtype=np.float64)
    out = np.empty_like(x)
    for k in range(len(x)):
        out[k] = x[max(0, k + 1 - window):k + 1].mean()
    return out


@dataclass(frozen=True)
class StructuralRow:
    variant: str
    actor_params: int
    critic_params: int
    nets_updated: int
    seconds_per_1000: float

    @property
    def total_params(self) -> int:
        return self.actor_params + self.critic_params


def _filled_memory(env: ParticleEnv, size: int, rng: np.random.Generator) -> ReplayMemory:
    memory = ReplayMemory.for_spec(env.spec, size)
    while len(memory) < size:
        state, obs = env.reset(rng)
        done = False
        while not done and len(memory) < size:
            acts = list(rng.uniform(-1.0, 1.0, size=(env.n_agents, 2)))
            state, nxt, r, done = env.step(state, acts)
            memory.push(Transition(np.concatenate(obs), np.concatenate(acts), r,
                                   np.concatenate(nxt), done))
            obs = nxt
    return memory


def structural_report(cfgs: Sequence[TrainConfig], env: ParticleEnv,
                      timing_steps: int = 1000) -> list[StructuralRow]:
    """Parameter counts, nets updated per step and learning-step wall clock per variant.

    Timing covers the learning iteration alone on a pre-filled memory; the
    environment is not stepped inside the timed region.  ``timing_steps=0``
    skips timing.
    """
    rows = []
    for cfg in cfgs:
        ens = Ensemble(env.spec, cfg)
        seconds = float("nan")
        if timing_steps > 0:
            rng = np.random.default_rng(cfg.seed)
            memory = _filled_memory(env, max(cfg.batch_size, 4 * cfg.batch_size), rng)
            t0 = time.perf_counter()
            for _ in range(timing_steps):
                learn(ens, memory, cfg, rng)
            seconds = (time.perf_counter() - t0) * 1000.0 / timing_steps
        rows.append(StructuralRow(cfg.variant, ens.actor_param_count(),
                                  ens.critic_param_count(), ens.nets_updated_per_step(),
                                  seconds))
    return rows


def param_ratio(rows: Sequence[StructuralRow], num: str, den: str) -> Fraction:
    by = {r.variant: r for r in rows}
    return Fraction(by[num].total_params, by[den].total_params)


def format_structural(rows: Sequence[StructuralRow], n_agents: int) -> str:
    lines = [f"agents {n_agents}",
             "variant actor_params critic_params total_params nets_updated seconds_per_1000_steps"]
    for r in rows:
        lines.append(f"{r.variant} {r.actor_params} {r.critic_params} {r.total_params} "
                     f"{r.nets_updated} {r.seconds_per_1000:.4f}")
    variants = {r.variant for r in rows}
    if "maddpg" in variants:
        for other in ("v0", "v1", "v2"):
            if other in variants:
                ratio = param_ratio(rows, "maddpg", other)
                lines.append(f"param_ratio maddpg/{other} {float(ratio)!r}")
    return "\n".join(lines) + "\n"
