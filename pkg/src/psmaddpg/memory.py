"""Ring-buffer replay memory with uniform sampling without replacement."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import InsufficientDataError, InvalidSpecError, NumericError, ShapeError


@dataclass(frozen=True)
class Transition:
    """One joint step: every agent's observation, action and reward.

    ``x`` and ``x_next`` concatenate the agents' local observations in agent
    order, ``a`` their actions, ``r`` holds one reward per agent.
    """

    x: np.ndarray
    a: np.ndarray
    r: np.ndarray
    x_next: np.ndarray
    terminal: bool


@dataclass(frozen=True)
class Batch:
    x: np.ndarray
    a: np.ndarray
    r: np.ndarray
    x_next: np.ndarray
    terminal: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[Transition]:
        for k in range(len(self)):
            yield Transition(self.x[k], self.a[k], self.r[k], self.x_next[k],
                             bool(self.terminal[k]))


class ReplayMemory:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int, n_agents: int) -> None:
        if capacity < 1:
            raise InvalidSpecError("replay capacity must be positive")
        self.capacity = int(capacity)
        self.obs_dim, self.act_dim, self.n_agents = obs_dim, act_dim, n_agents
        self._x = np.empty((capacity, obs_dim))
        self._a = np.empty((capacity, act_dim))
        self._r = np.empty((capacity, n_agents))
        self._x_next = np.empty((capacity, obs_dim))
        self._terminal = np.empty(capacity, dtype=bool)
        self._next = 0
        self.size = 0

    @classmethod
    def for_spec(cls, spec, capacity: int) -> "ReplayMemory":
        return cls(capacity, sum(spec.obs_dims), sum(spec.act_dims), spec.n_agents)

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        x = np.asarray(t.x, dtype=np.float64)
        a = np.asarray(t.a, dtype=np.float64)
        r = np.asarray(t.r, dtype=np.float64)
        x_next = np.asarray(t.x_next, dtype=np.float64)
        if (x.shape != (self.obs_dim,) or x_next.shape != (self.obs_dim,)
                or a.shape != (self.act_dim,) or r.shape != (self.n_agents,)):
            raise ShapeError(
                f"transition shapes x{x.shape} a{a.shape} r{r.shape} x'{x_next.shape} do not match "
                f"memory layout ({self.obs_dim}, {self.act_dim}, {self.n_agents})"
            )
        for arr in (x, a, r, x_next):
            if not np.all(np.isfinite(arr)):
                raise NumericError("transition contains non-finite values")
        i = self._next
        self._x[i], self._a[i], self._r[i], self._x_next[i] = x, a, r, x_next
        self._terminal[i] = bool(t.terminal)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _ordered_slots(self) -> np.ndarray:
        # slot indices from oldest to newest
        start = self._next if self.size == self.capacity else 0
        return (start + np.arange(self.size)) % self.capacity

    def __getitem__(self, k: int) -> Transition:
        """``k``-th stored transition counting from the oldest."""
        if not -self.size <= k < self.size:
            raise IndexError(k)
        i = self._ordered_slots()[k]
        return Transition(self._x[i].copy(), self._a[i].copy(), self._r[i].copy(),
                          self._x_next[i].copy(), bool(self._terminal[i]))

    def sample(self, s: int, rng: np.random.Generator) -> Batch:
        if s < 1:
            raise InvalidSpecError("batch size must be positive")
        if s > self.size:
            raise InsufficientDataError(f"cannot draw {s} samples from {self.size} stored")
        idx = rng.choice(self.size, size=s, replace=False)
        # idx counts from the oldest entry; map to ring slots
        slots = (self._next + idx) % self.capacity if self.size == self.capacity else idx
        return Batch(self._x[slots], self._a[slots], self._r[slots], self._x_next[slots],
                     self._terminal[slots], idx)
