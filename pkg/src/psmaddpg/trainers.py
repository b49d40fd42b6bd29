"""MADDPG and the three parameter-sharing variants on one training skeleton.

Variants and what they own:

========  ====================  ==================================
variant   actors                critics
========  ====================  ==================================
maddpg    one per agent         one per agent
v0        one shared            one shared
v1        one shared            one per agent
v2        one shared            one shared trunk with a head per agent
========  ====================  ==================================

Every online net has a target copy updated by ``soft_update`` after each
learning step.  Critics read ``concat(x, a)``: all agents' observations, then
all agents' actions, both in agent order.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from . import diffnet
from .diffnet import AdamState, GradientSet, LayeredNet, MultiHeadNet
from .envs import EnvSpec, ParticleEnv
from .errors import InvalidSpecError, ShapeError
from .memory import Batch, ReplayMemory, Transition
from .records import EpisodeRecord

log = logging.getLogger(__name__)

VARIANTS = ("maddpg", "v0", "v1", "v2")


@dataclass
class TrainConfig:
    variant: str = "v0"
    gamma: float = 0.99
    tau: float = 0.01
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    batch_size: int = 64
    warmup: int = 1000
    eps_start: float = 1.0
    eps_end: float = 0.02
    eps_decay_steps: int = 15_000
    total_steps: int = 30_000
    max_episode_length: int = 50
    seed: int = 0
    actor_hidden: tuple[int, ...] = (64, 64)
    critic_hidden: tuple[int, ...] = (64, 64)
    v2_shared_sizes: tuple[int, ...] = (64, 64)
    v2_head_sizes: tuple[int, ...] = (32,)
    memory_capacity: int = 50_000

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidSpecError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidSpecError("gamma must lie in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise InvalidSpecError("tau must lie in (0, 1]")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise InvalidSpecError("learning rates must be positive")
        if self.batch_size < 1 or self.eps_decay_steps < 1 or self.memory_capacity < 1:
            raise InvalidSpecError("batch size, decay steps and capacity must be positive")
        if self.warmup < 0 or self.total_steps < 0 or self.max_episode_length < 1:
            raise InvalidSpecError("warmup / total_steps / max_episode_length out of range")
        if not self.eps_start >= self.eps_end >= 0.0:
            raise InvalidSpecError("need eps_start >= eps_end >= 0")
        for name in ("actor_hidden", "critic_hidden", "v2_shared_sizes", "v2_head_sizes"):
            sizes = tuple(int(s) for s in getattr(self, name))
            if any(s <= 0 for s in sizes):
                raise InvalidSpecError(f"{name} entries must be positive")
            setattr(self, name, sizes)
        if not self.v2_shared_sizes:
            raise InvalidSpecError("the v2 critic trunk needs at least one layer")

    @classmethod
    def full_scale(cls, **overrides) -> "TrainConfig":
        """Network shapes and schedule from the original experiments."""
        base = dict(lr_actor=1e-4, lr_critic=1e-4, eps_decay_steps=600_000,
                    total_steps=2_000_000, max_episode_length=500,
                    actor_hidden=(500, 128), critic_hidden=(500, 300, 128),
                    v2_shared_sizes=(500, 300), v2_head_sizes=(128,),
                    memory_capacity=1_000_000)
        base.update(overrides)
        return cls(**base)


def exploration_epsilon(step: int, cfg: TrainConfig) -> float:
    """Linear decay from ``eps_start`` to ``eps_end`` over ``eps_decay_steps``, then flat."""
    if step >= cfg.eps_decay_steps:
        return cfg.eps_end
    frac = step / cfg.eps_decay_steps
    return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)


def exploration_noise(eps: float, size, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, eps, size=size)


def select_action(actor: LayeredNet, obs: np.ndarray, eps: float,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Deterministic policy output plus Gaussian noise of std ``eps``, clipped to [-1, 1].

    With ``eps == 0`` no random numbers are drawn.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (actor.input_dim,):
        raise ShapeError(f"actor expects an observation of length {actor.input_dim}, "
                         f"got shape {obs.shape}")
    mu = diffnet.forward(actor, obs)
    if eps > 0:
        mu = mu + exploration_noise(eps, mu.shape, rng)
    return np.clip(mu, -1.0, 1.0)


def _seeds(seed: int, n: int) -> list[int]:
    rng = np.random.default_rng([seed, 0x5EED])
    return [int(s) for s in rng.integers(0, 2**63 - 1, size=n)]


class Ensemble:
    """All online and target nets of one variant, with their Adam states."""

    def __init__(self, spec: EnvSpec, cfg: TrainConfig) -> None:
        if cfg.variant != "maddpg" and not spec.uniform:
            raise InvalidSpecError(
                f"{cfg.variant} shares one actor and needs uniform observation/action sizes")
        self.spec = spec
        self.cfg = cfg
        self.variant = cfg.variant
        n = spec.n_agents
        critic_in = sum(spec.obs_dims) + sum(spec.act_dims)
        n_actors = n if self.variant == "maddpg" else 1
        n_critics = n if self.variant in ("maddpg", "v1") else 1
        seeds = iter(_seeds(cfg.seed, n_actors + n_critics))

        self.actors = [
            diffnet.init_net([spec.obs_dims[i], *cfg.actor_hidden, spec.act_dims[i]],
                             ["relu"] * len(cfg.actor_hidden) + ["tanh"], next(seeds))
            for i in range(n_actors)
        ]
        if self.variant == "v2":
            self.critics = [diffnet.init_multihead([critic_in, *cfg.v2_shared_sizes],
                                                   cfg.v2_head_sizes, n, next(seeds))]
        else:
            self.critics = [
                diffnet.init_net([critic_in, *cfg.critic_hidden, 1],
                                 ["relu"] * len(cfg.critic_hidden) + ["identity"], next(seeds))
                for _ in range(n_critics)
            ]
        self.target_actors = [a.copy() for a in self.actors]
        self.target_critics = [c.copy() for c in self.critics]
        self.actor_opts = [AdamState.for_net(a) for a in self.actors]
        self.critic_opts = [AdamState.for_net(c) for c in self.critics]

    @property
    def n_agents(self) -> int:
        return self.spec.n_agents

    @property
    def shared_actor(self) -> bool:
        return self.variant != "maddpg"

    def actor_index(self, i: int) -> int:
        return i if self.variant == "maddpg" else 0

    def critic_index(self, i: int) -> int:
        return i if self.variant in ("maddpg", "v1") else 0

    def actor_for(self, i: int) -> LayeredNet:
        return self.actors[self.actor_index(i)]

    def critic_for(self, i: int):
        return self.critics[self.critic_index(i)]

    def act(self, i: int, obs: np.ndarray, eps: float = 0.0,
            rng: np.random.Generator | None = None) -> np.ndarray:
        return select_action(self.actor_for(i), obs, eps, rng)

    def act_all(self, observations, eps: float = 0.0,
                rng: np.random.Generator | None = None) -> list[np.ndarray]:
        return [self.act(i, o, eps, rng) for i, o in enumerate(observations)]

    def online_nets(self) -> list:
        return [*self.actors, *self.critics]

    def target_nets(self) -> list:
        return [*self.target_actors, *self.target_critics]

    def named_nets(self):
        """``(role, index, net)`` for every net, online first."""
        for role, nets in (("actor", self.actors), ("critic", self.critics),
                           ("target_actor", self.target_actors),
                           ("target_critic", self.target_critics)):
            for k, net in enumerate(nets):
                yield role, k, net

    def param_count(self, include_targets: bool = False) -> int:
        nets = self.online_nets() + (self.target_nets() if include_targets else [])
        return sum(diffnet.param_count(n) for n in nets)

    def actor_param_count(self) -> int:
        return sum(diffnet.param_count(a) for a in self.actors)

    def critic_param_count(self) -> int:
        return sum(diffnet.param_count(c) for c in self.critics)

    def nets_updated_per_step(self) -> int:
        return len(self.actors) + len(self.critics)

    def state_digest(self) -> bytes:
        import hashlib

        h = hashlib.sha256()
        for _, _, net in self.named_nets():
            h.update(net.params.tobytes())
        return h.digest()


# ---------------------------------------------------------------------------
# learning operations


def _stack_agent_obs(spec: EnvSpec, x: np.ndarray, agents) -> np.ndarray:
    """Rows of agent ``agents[0]`` first, then ``agents[1]``, ..."""
    return np.concatenate([x[:, spec.obs_slice(i)] for i in agents], axis=0)


def target_next_actions(ens: Ensemble, x_next: np.ndarray) -> np.ndarray:
    """Joint next action ``a'_j = mu'_j(o'_j)`` from the target actors, shape (S, sum act)."""
    spec = ens.spec
    s = len(x_next)
    if ens.shared_actor:
        out = diffnet.forward(ens.target_actors[0], _stack_agent_obs(spec, x_next, range(spec.n_agents)))
        # rows are agent-major; regroup to (S, N * act)
        return out.reshape(spec.n_agents, s, -1).transpose(1, 0, 2).reshape(s, -1)
    return np.concatenate([diffnet.forward(ens.target_actors[j], x_next[:, spec.obs_slice(j)])
                           for j in range(spec.n_agents)], axis=1)


def bellman_targets(ens: Ensemble, batch: Batch, gamma: float, agent: int | None = None,
                    next_actions: np.ndarray | None = None) -> np.ndarray:
    """TD targets ``r_i + gamma * (1 - terminal) * Q'_i(x', mu'(o'))``.

    Returns shape (S,) for one agent, or (S, N) with ``agent=None`` on a
    multi-head (v2) critic, one column per head.
    """
    if next_actions is None:
        next_actions = target_next_actions(ens, batch.x_next)
    inp = np.concatenate([batch.x_next, next_actions], axis=1)
    cont = gamma * (1.0 - batch.terminal.astype(np.float64))
    if ens.variant == "v2":
        q = diffnet.forward(ens.target_critics[0], inp)
        y = batch.r + cont[:, None] * q
        return y if agent is None else y[:, agent]
    if agent is None:
        raise InvalidSpecError(f"{ens.variant} needs an agent index for its targets")
    q = diffnet.forward(ens.target_critics[ens.critic_index(agent)], inp)[:, 0]
    return batch.r[:, agent] + cont * q


def critic_loss_and_grads(critic, batch: Batch, y: np.ndarray):
    inp = np.concatenate([batch.x, batch.a], axis=1)
    q, cache = critic.forward_cached(inp)
    if isinstance(critic, MultiHeadNet):
        resid = q - y
    else:
        resid = q - y.reshape(-1, 1)
    loss = float(np.mean(resid * resid))
    grads, _ = critic.backward_cached(cache, 2.0 * resid / resid.size, want_input=False)
    return loss, grads


def critic_update(ens: Ensemble, batch: Batch, cfg: TrainConfig, agent: int | None = None,
                  y: np.ndarray | None = None) -> float:
    """One Adam descent step on the mean squared TD error; returns the pre-step loss.

    ``agent`` picks the critic (maddpg, v1) or whose reward forms the targets
    (v0).  The v2 loss averages over every head and ignores ``agent``.
    """
    if ens.variant == "v2":
        agent = None
    if y is None:
        y = bellman_targets(ens, batch, cfg.gamma, agent)
    k = 0 if agent is None else ens.critic_index(agent)
    loss, grads = critic_loss_and_grads(ens.critics[k], batch, y)
    diffnet.adam_step(ens.critics[k], grads, ens.critic_opts[k], cfg.lr_critic, "descend")
    return loss


def _policy_terms(ens: Ensemble, batch: Batch, agents, critic, heads):
    """Shared forward pass behind the objective and its gradient.

    For each listed agent ``i`` its action slot is replaced by ``mu(o_i)``
    while everyone else keeps the batch action; the blocks are stacked so the
    critic runs once.
    """
    spec = ens.spec
    s = len(batch)
    actor = ens.actor_for(agents[0])
    mu, a_cache = actor.forward_cached(_stack_agent_obs(spec, batch.x, agents))
    a = np.tile(batch.a, (len(agents), 1))
    for b, i in enumerate(agents):
        a[b * s:(b + 1) * s, spec.act_slice(i)] = mu[b * s:(b + 1) * s]
    inp = np.concatenate([np.tile(batch.x, (len(agents), 1)), a], axis=1)
    q, c_cache = critic.forward_cached(inp)
    rows = np.arange(len(agents) * s)
    cols = np.repeat(np.asarray(heads), s)
    return actor, a_cache, c_cache, q, rows, cols


def _actor_setup(ens: Ensemble, agent: int | None):
    if ens.variant == "v2":
        agents = list(range(ens.n_agents))
        return agents, ens.critics[0], agents
    if agent is None:
        raise InvalidSpecError(f"{ens.variant} needs an agent index for the actor update")
    return [agent], ens.critic_for(agent), [0]


def policy_objective(ens: Ensemble, batch: Batch, agent: int | None = None) -> float:
    """``mean_batch Q(x, a | a_i = mu(o_i))``; averaged over all heads for v2."""
    agents, critic, heads = _actor_setup(ens, agent)
    _, _, _, q, rows, cols = _policy_terms(ens, batch, agents, critic, heads)
    return float(q[rows, cols].mean())


def policy_gradient(ens: Ensemble, batch: Batch, agent: int | None = None):
    """Gradient of ``policy_objective`` with respect to the acting actor's parameters."""
    spec = ens.spec
    s = len(batch)
    agents, critic, heads = _actor_setup(ens, agent)
    actor, a_cache, c_cache, q, rows, cols = _policy_terms(ens, batch, agents, critic, heads)
    upstream = np.zeros_like(q)
    upstream[rows, cols] = 1.0 / len(rows)
    _, dq_dinp = critic.backward_cached(c_cache, upstream, want_params=False)
    dq_da = dq_dinp[:, sum(spec.obs_dims):]
    dmu = np.concatenate([dq_da[b * s:(b + 1) * s, spec.act_slice(i)]
                          for b, i in enumerate(agents)], axis=0)
    grads, _ = actor.backward_cached(a_cache, dmu, want_input=False)
    return grads


def v1_actor_gradient(ens: Ensemble, batches) -> GradientSet:
    """Shared-actor gradient for v1: agent ``i``'s term uses ``batches[i]`` and critic ``i``.

    Equals the mean of ``policy_gradient(ens, batches[i], i)`` over agents; the
    actor runs once on the stacked observations.
    """
    spec = ens.spec
    n = ens.n_agents
    s = len(batches[0])
    actor = ens.actors[0]
    obs = np.concatenate([b.x[:, spec.obs_slice(i)] for i, b in enumerate(batches)], axis=0)
    mu, a_cache = actor.forward_cached(obs)
    dmu = []
    for i, b in enumerate(batches):
        a = b.a.copy()
        a[:, spec.act_slice(i)] = mu[i * s:(i + 1) * s]
        critic = ens.critics[i]
        q, c_cache = critic.forward_cached(np.concatenate([b.x, a], axis=1))
        _, dq_dinp = critic.backward_cached(c_cache, np.full_like(q, 1.0 / (n * s)),
                                            want_params=False)
        dmu.append(dq_dinp[:, sum(spec.obs_dims):][:, spec.act_slice(i)])
    grads, _ = actor.backward_cached(a_cache, np.concatenate(dmu, axis=0), want_input=False)
    return grads


def actor_update(ens: Ensemble, batch: Batch, cfg: TrainConfig, agent: int | None = None) -> None:
    """One Adam ascent step along the deterministic policy gradient.

    maddpg: agent ``agent``'s own actor through its own critic.  v0: the
    shared actor in the chosen agent's slot.  v1: the shared actor through
    critic ``agent``.  v2: the shared actor, averaged over every agent slot
    and its matching head.
    """
    grads = policy_gradient(ens, batch, agent)
    k = 0 if ens.variant == "v2" else ens.actor_index(agent)
    diffnet.adam_step(ens.actors[k], grads, ens.actor_opts[k], cfg.lr_actor, "ascend")


def update_targets(ens: Ensemble, tau: float) -> int:
    pairs = list(zip(ens.target_nets(), ens.online_nets()))
    for target, online in pairs:
        diffnet.soft_update(target, online, tau)
    return len(pairs)


@dataclass
class StepReport:
    updated: bool = False
    nets_updated: int = 0
    optimizer_steps: int = 0
    targets_updated: int = 0
    critic_loss: float = float("nan")
    agent: int | None = None


def learn(ens: Ensemble, memory: ReplayMemory, cfg: TrainConfig,
          rng: np.random.Generator) -> StepReport:
    """One learning iteration of the selected variant on samples from ``memory``."""
    n = ens.n_agents
    s = cfg.batch_size
    report = StepReport(updated=True)
    v = ens.variant
    if v == "maddpg":
        batch = memory.sample(s, rng)
        a_next = target_next_actions(ens, batch.x_next)
        losses = []
        for i in range(n):
            y = bellman_targets(ens, batch, cfg.gamma, i, a_next)
            losses.append(critic_update(ens, batch, cfg, i, y))
            actor_update(ens, batch, cfg, i)
        report.critic_loss = float(np.mean(losses))
        report.optimizer_steps = 2 * n
    elif v == "v0":
        i = int(rng.integers(n))
        batch = memory.sample(s, rng)
        report.critic_loss = critic_update(ens, batch, cfg, i)
        actor_update(ens, batch, cfg, i)
        report.agent = i
        report.optimizer_steps = 2
    elif v == "v1":
        # one batch serves every critic and the actor, like the other variants
        batch = memory.sample(s, rng)
        a_next = target_next_actions(ens, batch.x_next)
        report.critic_loss = float(np.mean([
            critic_update(ens, batch, cfg, i, bellman_targets(ens, batch, cfg.gamma, i, a_next))
            for i in range(n)]))
        grads = v1_actor_gradient(ens, [batch] * n)
        diffnet.adam_step(ens.actors[0], grads, ens.actor_opts[0], cfg.lr_actor, "ascend")
        report.optimizer_steps = n + 1
    else:
        batch = memory.sample(s, rng)
        report.critic_loss = critic_update(ens, batch, cfg)
        actor_update(ens, batch, cfg)
        report.optimizer_steps = 2
    report.nets_updated = ens.nets_updated_per_step()
    report.targets_updated = update_targets(ens, cfg.tau)
    return report


def train_step(ens: Ensemble, memory: ReplayMemory, transition: Transition | None,
               cfg: TrainConfig, rng: np.random.Generator) -> StepReport:
    """Store ``transition`` then, once the memory is warm, run one learning iteration."""
    if transition is not None:
        memory.push(transition)
    if len(memory) < max(cfg.batch_size, cfg.warmup):
        return StepReport()
    return learn(ens, memory, cfg, rng)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    ensemble: Ensemble
    episodes: list[EpisodeRecord] = field(default_factory=list)
    steps: int = 0
    updates: int = 0
    warnings: list[str] = field(default_factory=list)


def compatibility_warnings(spec: EnvSpec, cfg: TrainConfig) -> list[str]:
    if cfg.variant == "v0" and not (spec.reward_sharing or spec.exchangeable):
        return ["v0 shares one critic across agents but the environment has neither "
                "reward sharing nor exchangeability; its per-agent Q functions differ"]
    return []


def train(env: ParticleEnv, cfg: TrainConfig,
          on_episode: Callable[[TrainResult], None] | None = None) -> TrainResult:
    """Run episodes until ``cfg.total_steps`` environment steps have been taken.

    Only episodes that run to completion are recorded.  ``on_episode`` is
    called after each recorded episode.
    """
    spec = env.spec
    rng = np.random.default_rng(cfg.seed)
    ens = Ensemble(spec, cfg)
    memory = ReplayMemory.for_spec(spec, cfg.memory_capacity)
    result = TrainResult(ens, warnings=compatibility_warnings(spec, cfg))
    for w in result.warnings:
        log.warning(w)
    step = 0
    while step < cfg.total_steps:
        state, obs = env.reset(rng)
        returns = np.zeros(spec.n_agents)
        eps0 = exploration_epsilon(step, cfg)
        done = False
        t = 0
        while not done and step < cfg.total_steps:
            eps = exploration_epsilon(step, cfg)
            actions = ens.act_all(obs, eps, rng)
            state, next_obs, rewards, done = env.step(state, actions)
            tr = Transition(np.concatenate(obs), np.concatenate(actions), rewards,
                            np.concatenate(next_obs), done)
            report = train_step(ens, memory, tr, cfg, rng)
            result.updates += report.updated
            returns += rewards
            obs = next_obs
            step += 1
            t += 1
        result.steps = step
        if done:
            result.episodes.append(
                EpisodeRecord.from_returns(len(result.episodes), returns, t, eps0))
            if on_episode is not None:
                on_episode(result)
    return result


# ---------------------------------------------------------------------------
# persistence


def save_ensemble(ens: Ensemble, directory: str | os.PathLike) -> list[str]:
    """One file per net: a manifest line ``variant N gamma tau`` then the net text."""
    manifest = f"{ens.variant} {ens.n_agents} {ens.cfg.gamma!r} {ens.cfg.tau!r}\n"
    written = []
    for role, k, net in ens.named_nets():
        path = os.path.join(directory, f"{role}_{k}.net")
        with open(path, "w") as fh:
            fh.write(manifest)
            fh.write(diffnet.dumps(net))
        written.append(path)
    return written


def load_ensemble(directory: str | os.PathLike, spec: EnvSpec, cfg: TrainConfig) -> Ensemble:
    ens = Ensemble(spec, cfg)
    for role, k, net in ens.named_nets():
        with open(os.path.join(directory, f"{role}_{k}.net")) as fh:
            header = fh.readline().split()
            loaded = diffnet.loads(fh.read())
        if header[:2] != [ens.variant, str(ens.n_agents)]:
            raise InvalidSpecError(f"{role}_{k}.net belongs to {' '.join(header[:2])}")
        if not net.same_shape(loaded):
            raise ShapeError(f"{role}_{k}.net does not match the configured shapes")
        net.params[...] = loaded.params
    return ens


def config_fields() -> list[str]:
    return [f.name for f in fields(TrainConfig)]
