"""Proximal policy optimisation: clipped surrogate, GAE, Adam, resumable training loop."""
from __future__ import annotations

import csv
import json
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..rng import substream
from . import checkpoint as ckpt
from .buffer import RolloutBuffer, normalize_advantages
from .network import (LOG_STD_MAX, LOG_STD_MIN, PolicyParams, backward, forward, gaussian_entropy,
                      gaussian_log_prob, init_params)
from .normalizer import ReturnScaler, RunningNorm

log = logging.getLogger(__name__)

CURVE_FIELDS = ("timestep", "update", "mean_reward", "sr", "episodes", "policy_loss", "value_loss",
                "entropy", "clip_fraction", "approx_kl")


class ConfigMismatchError(ckpt.CheckpointError):
    """Resume refused: the checkpoint was written under a different configuration."""


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


@dataclass(frozen=True)
class TrainConfig:
    total_timesteps: int = 300_000
    n_workers: int = 4
    rollout_steps: int = 2048          # per update, summed over workers
    minibatch_size: int = 256
    epochs: int = 10
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    learning_rate: float = 3e-4
    ent_coef: float = 0.0
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden: tuple = (256, 128, 64, 32)
    init_log_std: float = -1.6
    reward_scaling: str = "return_std"  # or "none"
    action_limit: float = 0.4
    checkpoint_every: int = 10          # updates
    curve_window: int = 20              # episodes averaged per curve row
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must be in [0, 1]")
        if not self.clip_eps > 0:
            raise ValueError("clip_eps must be positive")
        if self.rollout_steps % self.n_workers:
            raise ValueError("rollout_steps must be a multiple of n_workers")
        if self.reward_scaling not in ("return_std", "none"):
            raise ValueError("reward_scaling must be 'return_std' or 'none'")


class Adam:
    def __init__(self, params: PolicyParams, lr: float, betas=(0.9, 0.999), eps: float = 1e-5):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: PolicyParams, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params.arrays[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return total


def ppo_loss(params: PolicyParams, batch: dict, cfg: TrainConfig, with_grad: bool = True):
    """Clipped-surrogate loss ``-L_clip + c_v * MSE(V, R) - c_e * H`` and its gradient."""
    obs, act, old_lp = batch["obs"], batch["actions"], batch["log_probs"]
    adv, ret = batch["advantages"], batch["returns"]
    n = len(obs)
    mean, log_std, value, cache = forward(params, obs, return_cache=True)
    lp = gaussian_log_prob(act, mean, log_std)
    ratio = np.exp(lp - old_lp)
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    s1, s2 = ratio * adv, clipped * adv
    policy_loss = -float(np.mean(np.minimum(s1, s2)))
    value_loss = float(np.mean((value - ret) ** 2))
    entropy = gaussian_entropy(log_std)
    loss = policy_loss + cfg.vf_coef * value_loss - cfg.ent_coef * entropy
    stats = {
        "loss": loss, "policy_loss": policy_loss, "value_loss": value_loss, "entropy": entropy,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
        "approx_kl": float(np.mean((ratio - 1.0) - (lp - old_lp))),
    }
    if not with_grad:
        return loss, None, stats
    # d(-mean(min(s1, s2)))/d lp: only the unclipped branch carries gradient
    g_lp = np.where(s1 <= s2, -adv * ratio / n, 0.0)
    inv_var = np.exp(-2.0 * log_std)
    diff = act - mean
    g_mean = g_lp[:, None] * diff * inv_var
    g_log_std = np.sum(g_lp[:, None] * (diff * diff * inv_var - 1.0), axis=0) - cfg.ent_coef * np.ones_like(log_std)
    g_value = cfg.vf_coef * 2.0 * (value - ret) / n
    grads = backward(params, cache, g_mean, g_value, g_log_std)
    return loss, grads, stats


def ppo_update(params: PolicyParams, opt: Adam, data: dict, cfg: TrainConfig, rng: np.random.Generator):
    """Several epochs of minibatch Adam steps on one rollout; returns averaged metrics."""
    n = len(data["obs"])
    data = dict(data)
    data["advantages"] = normalize_advantages(data["advantages"])
    history = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = perm[start:start + cfg.minibatch_size]
            batch = {k: v[idx] for k, v in data.items()}
            loss, grads, stats = ppo_loss(params, batch, cfg)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLossError(f"non-finite loss {loss!r}", {"batch": batch, "stats": stats})
            stats["grad_norm"] = clip_grad_norm(grads, cfg.max_grad_norm)
            opt.step(params, grads)
            np.clip(params.arrays["log_std"], LOG_STD_MIN, LOG_STD_MAX, out=params.arrays["log_std"])
            history.append(stats)
    if not params.all_finite():
        raise NonFiniteLossError("parameters became non-finite", {})
    out = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
    out["first_clip_fraction"] = history[0]["clip_fraction"]
    return out


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _set_rng_state(rng: np.random.Generator, state: dict) -> None:
    rng.bit_generator.state = state


class Trainer:
    """Collects rollouts from ``n_workers`` environments and runs PPO updates.

    Environments follow ``reset(seed) -> obs`` and ``step(action) -> (obs, reward,
    terminated, truncated, info)`` with ``info["success"]``; ``get_state`` /
    ``set_state`` make checkpoints resumable mid-episode.
    """

    def __init__(self, env_factory: Callable[[int], object], cfg: TrainConfig, out_dir=None,
                 config_hash: str = "", threads: int = 1, tags: dict | None = None):
        self.cfg = cfg
        self.tags = dict(tags or {})
        self.envs = [env_factory(w) for w in range(cfg.n_workers)]
        self.obs_dim = int(self.envs[0].obs_dim)
        self.act_dim = int(self.envs[0].act_dim)
        self.params = init_params(self.obs_dim, self.act_dim, cfg.hidden, rng=substream(cfg.seed, "policy_init"),
                                  init_log_std=cfg.init_log_std)
        self.opt = Adam(self.params, cfg.learning_rate)
        self.obs_norm = RunningNorm((self.obs_dim,))
        self.ret_scaler = ReturnScaler(cfg.n_workers, cfg.gamma) if cfg.reward_scaling == "return_std" else None
        self.action_rng = substream(cfg.seed, "actions")
        self.worker_rngs = [substream(cfg.seed, "worker", w) for w in range(cfg.n_workers)]
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.config_hash = config_hash
        self.threads = max(1, int(threads))
        self.timestep = 0
        self.update = 0
        self.curve: list = []
        self.recent = deque(maxlen=cfg.curve_window)
        self.ep_return = np.zeros(cfg.n_workers)
        self.obs = np.stack([self._reset(w) for w in range(cfg.n_workers)])

    def _reset(self, w: int) -> np.ndarray:
        return np.asarray(self.envs[w].reset(seed=int(self.worker_rngs[w].integers(2 ** 31))), dtype=float)

    def _step_all(self, actions: np.ndarray) -> list:
        def one(w):
            return self.envs[w].step(actions[w])
        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                return list(pool.map(one, range(len(self.envs))))
        return [one(w) for w in range(len(self.envs))]

    def collect(self) -> RolloutBuffer:
        cfg = self.cfg
        steps = cfg.rollout_steps // cfg.n_workers
        buf = RolloutBuffer(steps, cfg.n_workers, self.obs_dim, self.act_dim)
        limit = cfg.action_limit
        for _ in range(steps):
            self.obs_norm.update(self.obs)
            on = self.obs_norm.normalize(self.obs)
            mean, log_std, value = forward(self.params, on)
            raw = mean + np.exp(log_std) * self.action_rng.standard_normal(mean.shape)
            lp = gaussian_log_prob(raw, mean, log_std)
            results = self._step_all(np.clip(raw, -limit, limit))
            rewards = np.zeros(cfg.n_workers)
            dones = np.zeros(cfg.n_workers, dtype=bool)
            boot = np.zeros(cfg.n_workers)
            next_obs = np.empty_like(self.obs)
            for w, (o, r, term, trunc, info) in enumerate(results):
                rewards[w] = r
                self.ep_return[w] += r
                o = np.asarray(o, dtype=float)
                if term or trunc:
                    self.recent.append((self.ep_return[w], bool(info.get("success", False))))
                    self.ep_return[w] = 0.0
                    dones[w] = True
                    if trunc and not term:
                        boot[w] = forward(self.params, self.obs_norm.normalize(o))[2]
                    o = self._reset(w)
                next_obs[w] = o
            scaled = self.ret_scaler.scale(rewards, dones) if self.ret_scaler is not None else rewards
            buf.add(on, raw, lp, scaled + cfg.gamma * boot, value, dones)
            self.obs = next_obs
            self.timestep += cfg.n_workers
        last = forward(self.params, self.obs_norm.normalize(self.obs))[2]
        buf.finish(last, cfg.gamma, cfg.gae_lambda)
        return buf

    def train_step(self) -> dict:
        buf = self.collect()
        metrics = ppo_update(self.params, self.opt, buf.flat(), self.cfg,
                             substream(self.cfg.seed, "minibatch", self.update))
        self.update += 1
        if self.recent:
            mean_r = float(np.mean([r for r, _ in self.recent]))
            sr = float(np.mean([s for _, s in self.recent]))
        else:
            mean_r, sr = float("nan"), float("nan")
        row = {"timestep": self.timestep, "update": self.update, "mean_reward": mean_r, "sr": sr,
               "episodes": len(self.recent)}
        row.update({k: metrics[k] for k in CURVE_FIELDS if k in metrics})
        self.curve.append(row)
        return row

    def run(self, on_update: Callable[[dict], None] | None = None) -> list:
        cfg = self.cfg
        while self.timestep < cfg.total_timesteps:
            row = self.train_step()
            if on_update is not None:
                on_update(row)
            if self.out_dir is not None:
                self.write_curve()
                if self.update % cfg.checkpoint_every == 0:
                    self.save(self.out_dir / f"checkpoint_{self.update:05d}.ckpt")
                    self.save(self.out_dir / "last.ckpt")
        if self.out_dir is not None:
            self.save(self.out_dir / "final.ckpt")
            self.save(self.out_dir / "last.ckpt")
            self.write_curve()
        return self.curve

    # -- persistence ------------------------------------------------------

    def write_curve(self) -> Path:
        path = self.out_dir / "learning_curve.csv"
        write_curve(path, self.curve)
        return path

    def state_arrays(self) -> tuple[dict, dict]:
        arrays = {f"param/{k}": v for k, v in self.params.arrays.items()}
        arrays.update({f"adam_m/{k}": v for k, v in self.opt.m.items()})
        arrays.update({f"adam_v/{k}": v for k, v in self.opt.v.items()})
        arrays.update({f"obs_norm/{k}": v for k, v in self.obs_norm.state().items()})
        if self.ret_scaler is not None:
            arrays.update({f"ret_scaler/{k}": v for k, v in self.ret_scaler.state().items()})
        arrays["trainer/obs"] = self.obs
        arrays["trainer/ep_return"] = self.ep_return
        arrays["trainer/recent"] = np.array([[r, float(s)] for r, s in self.recent]).reshape(-1, 2)
        env_meta = []
        for w, env in enumerate(self.envs):
            if hasattr(env, "get_state"):
                ea, em = env.get_state()
                arrays.update({f"env{w}/{k}": v for k, v in ea.items()})
                env_meta.append(em)
        meta = {
            "kind": "ppo-trainer",
            "config": _jsonable(asdict(self.cfg)),
            "config_hash": self.config_hash,
            "tags": self.tags,
            "hidden": list(self.params.hidden),
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "timestep": self.timestep,
            "update": self.update,
            "adam_t": self.opt.t,
            "rng": {"actions": _rng_state(self.action_rng),
                    "workers": [_rng_state(r) for r in self.worker_rngs]},
            "curve": self.curve,
            "env_meta": env_meta,
        }
        return arrays, meta

    def save(self, path) -> Path:
        arrays, meta = self.state_arrays()
        return ckpt.save(path, arrays, meta)

    def restore(self, path) -> None:
        arrays, meta = ckpt.load(path)
        if meta.get("kind") != "ppo-trainer":
            raise ckpt.CheckpointError(f"{path} is not a trainer checkpoint")
        if meta.get("config_hash", "") != self.config_hash:
            raise ConfigMismatchError(
                f"config hash mismatch: checkpoint {meta.get('config_hash')!r}, current {self.config_hash!r}")
        for k in self.params.arrays:
            self.params.arrays[k][...] = arrays[f"param/{k}"]
            self.opt.m[k][...] = arrays[f"adam_m/{k}"]
            self.opt.v[k][...] = arrays[f"adam_v/{k}"]
        self.opt.t = int(meta["adam_t"])
        self.obs_norm.load({k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("obs_norm/")})
        if self.ret_scaler is not None:
            self.ret_scaler.load({k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("ret_scaler/")})
        self.obs = arrays["trainer/obs"].copy()
        self.ep_return = arrays["trainer/ep_return"].copy()
        self.recent.clear()
        for r, s in arrays["trainer/recent"]:
            self.recent.append((float(r), bool(s)))
        _set_rng_state(self.action_rng, meta["rng"]["actions"])
        for rng, st in zip(self.worker_rngs, meta["rng"]["workers"]):
            _set_rng_state(rng, st)
        for w, env in enumerate(self.envs):
            if hasattr(env, "set_state"):
                prefix = f"env{w}/"
                env.set_state({k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)},
                              meta["env_meta"][w])
        self.timestep = int(meta["timestep"])
        self.update = int(meta["update"])
        self.curve = list(meta["curve"])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_curve(path, rows: list) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CURVE_FIELDS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(float(row[k])) if isinstance(row.get(k), float) else row.get(k, ""))
                        for k in CURVE_FIELDS})


def read_curve(path) -> list:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def train(env_factory, cfg: TrainConfig, out_dir=None, resume=None, config_hash: str = "",
          threads: int = 1, on_update=None, tags: dict | None = None):
    """Train from scratch (or from ``resume``); returns (params, learning curve, trainer)."""
    trainer = Trainer(env_factory, cfg, out_dir=out_dir, config_hash=config_hash, threads=threads, tags=tags)
    if resume is not None:
        trainer.restore(resume)
    curve = trainer.run(on_update)
    return trainer.params, curve, trainer


# ---------------------------------------------------------------------------
# inference-only policy files
# ---------------------------------------------------------------------------

@dataclass
class Policy:
    """Deterministic-mode policy: normaliser + network."""

    params: PolicyParams
    obs_norm: RunningNorm
    action_limit: float = 0.4
    name: str = ""
    tags: dict = field(default_factory=dict)

    def act(self, obs) -> np.ndarray:
        mean, _, _ = forward(self.params, self.obs_norm.normalize(np.asarray(obs, dtype=float)))
        return np.clip(mean, -self.action_limit, self.action_limit)

    def __call__(self, obs) -> np.ndarray:
        return self.act(obs)


def load_policy(path, name: str = "") -> Policy:
    arrays, meta = ckpt.load(path)
    if meta.get("kind") != "ppo-trainer":
        raise ckpt.CheckpointError(f"{path} is not a policy checkpoint")
    params = PolicyParams({k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("param/")},
                          tuple(meta["hidden"]))
    norm = RunningNorm((meta["obs_dim"],))
    norm.load({k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("obs_norm/")})
    return Policy(params, norm, float(meta["config"]["action_limit"]), name or Path(path).stem,
                  dict(meta.get("tags", {})))


def curve_json(rows: list) -> str:
    return json.dumps(rows, sort_keys=True)
