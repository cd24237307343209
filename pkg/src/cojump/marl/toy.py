"""Small vectorized games for checking the optimizer end to end."""

from __future__ import annotations

import numpy as np


class _OneStepGame:
    """Every episode lasts one step; observations and state are a constant zero."""

    n_agents = 1
    obs_dim = 1
    state_dim = 1
    act_dim = 1

    def __init__(self, n_envs: int = 16):
        self.n = n_envs
        self.samples = 0

    def _obs(self):
        return np.zeros((self.n, self.n_agents, self.obs_dim)), np.zeros((self.n, self.state_dim))

    def reset(self):
        return self._obs()

    def reward(self, actions: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def step(self, actions):
        actions = np.asarray(actions, dtype=float)
        r = self.reward(actions)
        self.samples += self.n
        done = np.ones(self.n, dtype=bool)
        obs, state = self._obs()
        info = {
            "terminated": done.copy(),
            "truncated": np.zeros(self.n, dtype=bool),
            "final_state": state.copy(),
        }
        return obs, state, r, done, info


class GaussianBandit(_OneStepGame):
    """One agent, reward ``-(a - target)^2``."""

    def __init__(self, n_envs: int = 16, target: float = 0.7):
        super().__init__(n_envs)
        self.target = target

    def reward(self, actions):
        r = -((actions[:, 0, 0] - self.target) ** 2)
        return r[:, None]


class MatchingGame(_OneStepGame):
    """Two agents sharing reward ``-(a1 - a2)^2 - a1^2``."""

    n_agents = 2

    def reward(self, actions):
        a1, a2 = actions[:, 0, 0], actions[:, 1, 0]
        r = -((a1 - a2) ** 2) - a1**2
        return np.stack([r, r], axis=1)
