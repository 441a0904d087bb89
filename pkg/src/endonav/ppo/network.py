"""Actor-critic MLP in plain numpy with hand-written backpropagation.

A shared tanh trunk feeds a linear mean head and a linear value head; the policy
standard deviation is a free, state-independent parameter vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class Linear:
    """y = x W + b, W stored (in, out)."""

    @staticmethod
    def forward(x, W, b):
        return x @ W + b

    @staticmethod
    def backward(x, W, gy):
        """(gx, gW, gb) for upstream gradient gy."""
        return gy @ W.T, x.T @ gy, gy.sum(axis=0)


class Tanh:
    @staticmethod
    def forward(x):
        return np.tanh(x)

    @staticmethod
    def backward(y, gy):
        # expressed through the output y = tanh(x)
        return gy * (1.0 - y * y)


@dataclass
class PolicyParams:
    """Named weight arrays. Trunk layers ``W0, b0, ...``; heads ``Wmu, bmu, Wv, bv``."""

    arrays: dict
    hidden: tuple

    @property
    def n_layers(self) -> int:
        return len(self.hidden)

    @property
    def obs_dim(self) -> int:
        return self.arrays["W0"].shape[0]

    @property
    def act_dim(self) -> int:
        return self.arrays["log_std"].shape[0]

    def names(self) -> list:
        return sorted(self.arrays)

    def copy(self) -> "PolicyParams":
        return PolicyParams({k: v.copy() for k, v in self.arrays.items()}, tuple(self.hidden))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in self.names()])

    def set_flat(self, vec: np.ndarray) -> None:
        i = 0
        for k in self.names():
            a = self.arrays[k]
            a[...] = vec[i:i + a.size].reshape(a.shape)
            i += a.size

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())


def _orthogonal(rng: np.random.Generator, shape, gain: float) -> np.ndarray:
    a = rng.standard_normal(shape)
    flat = a if shape[0] >= shape[1] else a.T
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    q = q if shape[0] >= shape[1] else q.T
    return gain * q[: shape[0], : shape[1]]


def init_params(obs_dim: int, act_dim: int, hidden=(256, 128, 64, 32), rng=None,
                init_log_std: float = -1.6, policy_gain: float = 0.01) -> PolicyParams:
    """Orthogonal weights (gain sqrt 2 in the trunk, ``policy_gain`` on the mean head,
    1 on the value head) and zero biases."""
    rng = np.random.default_rng(0) if rng is None else rng
    arrays = {}
    sizes = (obs_dim,) + tuple(hidden)
    for i in range(len(hidden)):
        arrays[f"W{i}"] = _orthogonal(rng, (sizes[i], sizes[i + 1]), np.sqrt(2.0))
        arrays[f"b{i}"] = np.zeros(sizes[i + 1])
    arrays["Wmu"] = _orthogonal(rng, (sizes[-1], act_dim), policy_gain)
    arrays["bmu"] = np.zeros(act_dim)
    arrays["Wv"] = _orthogonal(rng, (sizes[-1], 1), 1.0)
    arrays["bv"] = np.zeros(1)
    arrays["log_std"] = np.full(act_dim, float(init_log_std))
    return PolicyParams(arrays, tuple(hidden))


def forward(params: PolicyParams, obs, return_cache: bool = False):
    """(mean (B, A), log_std (A,), value (B,)); a 1-D ``obs`` gives unbatched outputs."""
    x = np.asarray(obs, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.shape[1] != params.obs_dim:
        raise ValueError(f"observation has {x.shape[1]} components, network expects {params.obs_dim}")
    p = params.arrays
    acts = [x]
    h = x
    for i in range(params.n_layers):
        h = Tanh.forward(Linear.forward(h, p[f"W{i}"], p[f"b{i}"]))
        acts.append(h)
    mean = Linear.forward(h, p["Wmu"], p["bmu"])
    value = Linear.forward(h, p["Wv"], p["bv"])[:, 0]
    log_std = p["log_std"]
    if single:
        mean, value = mean[0], value[0]
    if return_cache:
        return mean, log_std, value, acts
    return mean, log_std, value


def backward(params: PolicyParams, acts: list, g_mean: np.ndarray, g_value: np.ndarray,
             g_log_std: np.ndarray) -> dict:
    """Gradients of a scalar loss given its gradients w.r.t. the three outputs."""
    p = params.arrays
    grads = {}
    h = acts[-1]
    gh, grads["Wmu"], grads["bmu"] = Linear.backward(h, p["Wmu"], g_mean)
    ghv, grads["Wv"], grads["bv"] = Linear.backward(h, p["Wv"], g_value[:, None])
    gh = gh + ghv
    for i in reversed(range(params.n_layers)):
        gz = Tanh.backward(acts[i + 1], gh)
        gh, grads[f"W{i}"], grads[f"b{i}"] = Linear.backward(acts[i], p[f"W{i}"], gz)
    grads["log_std"] = np.asarray(g_log_std, dtype=float).copy()
    return grads


def gaussian_log_prob(x, mean, log_std) -> np.ndarray:
    z = (x - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - mean.shape[-1] * HALF_LOG_2PI


def gaussian_entropy(log_std) -> float:
    return float(np.sum(log_std) + log_std.shape[-1] * (0.5 + HALF_LOG_2PI))


def sample_action(params: PolicyParams, obs, rng: np.random.Generator, limit: float = 0.4):
    """(clamped action, unclamped sample, log-prob of the unclamped sample)."""
    mean, log_std, _ = forward(params, obs)
    raw = mean + np.exp(log_std) * rng.standard_normal(np.shape(mean))
    return np.clip(raw, -limit, limit), raw, gaussian_log_prob(raw, mean, log_std)


def deterministic_action(params: PolicyParams, obs, limit: float = 0.4) -> np.ndarray:
    mean, _, _ = forward(params, obs)
    return np.clip(mean, -limit, limit)
