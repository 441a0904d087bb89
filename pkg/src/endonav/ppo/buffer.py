"""Rollout storage and generalised advantage estimation."""
from __future__ import annotations

import numpy as np


def compute_gae(rewards, values, dones, last_value, gamma: float, lam: float):
    """Advantages and returns for one trajectory stream.

    ``dones[t]`` marks that the episode ended after step t (no bootstrap from
    ``values[t+1]``); ``last_value`` bootstraps the final step when it did not end.
    Truncated episodes should fold ``gamma * V(final obs)`` into their last reward
    and be marked done.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    n = len(rewards)
    adv = np.zeros(n)
    next_value = float(last_value)
    running = 0.0
    for t in reversed(range(n)):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


class RolloutBuffer:
    """Fixed-size per-worker storage; arrays are (steps, workers, ...)."""

    def __init__(self, steps: int, workers: int, obs_dim: int, act_dim: int):
        self.steps, self.workers = steps, workers
        self.obs = np.zeros((steps, workers, obs_dim))
        self.actions = np.zeros((steps, workers, act_dim))
        self.log_probs = np.zeros((steps, workers))
        self.rewards = np.zeros((steps, workers))
        self.values = np.zeros((steps, workers))
        self.dones = np.zeros((steps, workers))
        self.advantages = None
        self.returns = None
        self.pos = 0

    def add(self, obs, actions, log_probs, rewards, values, dones) -> None:
        if self.pos >= self.steps:
            raise IndexError("rollout buffer is full")
        t = self.pos
        self.obs[t] = obs
        self.actions[t] = actions
        self.log_probs[t] = log_probs
        self.rewards[t] = rewards
        self.values[t] = values
        self.dones[t] = dones
        self.pos += 1

    @property
    def full(self) -> bool:
        return self.pos == self.steps

    def finish(self, last_values, gamma: float, lam: float) -> None:
        adv = np.zeros((self.steps, self.workers))
        ret = np.zeros((self.steps, self.workers))
        for w in range(self.workers):
            adv[:, w], ret[:, w] = compute_gae(self.rewards[:, w], self.values[:, w], self.dones[:, w],
                                              last_values[w], gamma, lam)
        self.advantages, self.returns = adv, ret

    def flat(self) -> dict:
        """Worker-major flattening (all of worker 0, then worker 1, ...)."""
        def f(a):
            return np.swapaxes(a, 0, 1).reshape((self.steps * self.workers,) + a.shape[2:])
        return {
            "obs": f(self.obs), "actions": f(self.actions), "log_probs": f(self.log_probs),
            "advantages": f(self.advantages), "returns": f(self.returns), "values": f(self.values),
        }


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    std = adv.std()
    return (adv - adv.mean()) / max(std, 1e-8)
