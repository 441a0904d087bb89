"""2-D double-integrator point reach: a cheap benchmark for the PPO implementation."""
from __future__ import annotations

import numpy as np

from ..rng import substream


class PointReach:
    """Point mass on a plane, pushed by a clipped acceleration toward a random goal.

    obs = (goal - position, velocity); reward = -distance per step, plus ``bonus``
    on reaching the goal (which ends the episode).
    """

    obs_dim = 4
    act_dim = 2

    def __init__(self, dt: float = 0.1, accel: float = 2.0, action_limit: float = 0.4,
                 goal_radius: float = 0.1, arena: float = 1.0, max_steps: int = 100, bonus: float = 10.0):
        self.dt, self.accel, self.limit = dt, accel, action_limit
        self.goal_radius, self.arena, self.max_steps, self.bonus = goal_radius, arena, max_steps, bonus
        self._rng = substream(0, "toy")
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.goal = np.zeros(2)
        self.t = 0

    def _obs(self) -> np.ndarray:
        return np.concatenate([self.goal - self.pos, self.vel])

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = substream(seed, "toy")
        self.pos = self._rng.uniform(-self.arena, self.arena, 2)
        self.goal = self._rng.uniform(-self.arena, self.arena, 2)
        self.vel = np.zeros(2)
        self.t = 0
        return self._obs()

    def step(self, action):
        a = np.clip(np.asarray(action, dtype=float), -self.limit, self.limit) / self.limit
        self.vel = self.vel + self.dt * self.accel * a
        self.pos = self.pos + self.dt * self.vel
        self.t += 1
        dist = float(np.linalg.norm(self.goal - self.pos))
        success = dist < self.goal_radius
        reward = -dist + (self.bonus if success else 0.0)
        truncated = not success and self.t >= self.max_steps
        return self._obs(), reward, success, truncated, {"success": success, "distance": dist}

    def get_state(self):
        arrays = {"pos": self.pos.copy(), "vel": self.vel.copy(), "goal": self.goal.copy()}
        return arrays, {"t": self.t, "rng": self._rng.bit_generator.state}

    def set_state(self, arrays, meta):
        self.pos, self.vel, self.goal = (np.array(arrays[k], dtype=float) for k in ("pos", "vel", "goal"))
        self.t = int(meta["t"])
        self._rng.bit_generator.state = meta["rng"]


def success_rate(policy, episodes: int = 100, seed: int = 12345, **kw) -> float:
    env = PointReach(**kw)
    rng = substream(seed, "toy-eval")
    hits = 0
    for _ in range(episodes):
        obs = env.reset(int(rng.integers(2 ** 31)))
        while True:
            obs, _, term, trunc, info = env.step(policy(obs))
            if term or trunc:
                hits += bool(info["success"])
                break
    return hits / episodes
