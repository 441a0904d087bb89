"""Running mean/variance statistics for observations and returns."""
from __future__ import annotations

import numpy as np


class RunningNorm:
    """Parallel-merge (Chan et al.) running moments; ``normalize`` clips to +-clip."""

    def __init__(self, shape=(), epsilon: float = 1e-4, clip: float = 10.0):
        self.mean = np.zeros(shape)
        self.var = np.ones(shape)
        self.count = float(epsilon)
        self.clip = float(clip)

    def update(self, batch) -> None:
        batch = np.asarray(batch, dtype=float)
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        n = batch.shape[0]
        delta = b_mean - self.mean
        total = self.count + n
        self.mean = self.mean + delta * n / total
        m2 = self.var * self.count + b_var * n + delta ** 2 * self.count * n / total
        self.var = m2 / total
        self.count = total

    def normalize(self, x) -> np.ndarray:
        return np.clip((np.asarray(x, dtype=float) - self.mean) / np.sqrt(self.var + 1e-8), -self.clip, self.clip)

    def state(self) -> dict:
        return {"mean": self.mean.copy(), "var": self.var.copy(), "count": np.array([self.count])}

    def load(self, st: dict) -> None:
        self.mean = np.array(st["mean"], dtype=float)
        self.var = np.array(st["var"], dtype=float)
        self.count = float(np.asarray(st["count"]).ravel()[0])


class ReturnScaler:
    """Divides rewards by the running std of the discounted return (per worker stream)."""

    def __init__(self, workers: int, gamma: float):
        self.gamma = gamma
        self.ret = np.zeros(workers)
        self.stats = RunningNorm(())

    def scale(self, rewards, dones) -> np.ndarray:
        self.ret = self.ret * self.gamma + rewards
        self.stats.update(self.ret)
        out = rewards / np.sqrt(self.stats.var + 1e-8)
        self.ret = np.where(dones, 0.0, self.ret)
        return out

    def state(self) -> dict:
        st = self.stats.state()
        st["ret"] = self.ret.copy()
        return st

    def load(self, st: dict) -> None:
        self.stats.load(st)
        self.ret = np.array(st["ret"], dtype=float)
