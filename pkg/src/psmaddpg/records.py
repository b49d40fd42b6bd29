from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    returns: np.ndarray  # per agent
    total: float
    steps: int
    epsilon: float = 0.0

    @classmethod
    def from_returns(cls, episode: int, returns, steps: int, epsilon: float = 0.0):
        returns = np.asarray(returns, dtype=np.float64)
        return cls(episode, returns, float(returns.sum()), steps, epsilon)
