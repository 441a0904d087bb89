"""Numpy PPO: actor-critic network, GAE rollouts, clipped-surrogate updates, checkpoints."""
from .algo import (Adam, ConfigMismatchError, NonFiniteLossError, Policy, TrainConfig, Trainer, load_policy, ppo_loss,
                   ppo_update, read_curve, train, write_curve)
from .buffer import RolloutBuffer, compute_gae, normalize_advantages
from .checkpoint import CheckpointError, CheckpointVersionError
from .network import PolicyParams, deterministic_action, forward, init_params, sample_action
from .normalizer import ReturnScaler, RunningNorm

__all__ = [
    "Adam", "ConfigMismatchError", "NonFiniteLossError", "Policy", "TrainConfig", "Trainer", "load_policy", "ppo_loss",
    "ppo_update", "read_curve", "train", "write_curve", "RolloutBuffer", "compute_gae",
    "normalize_advantages", "CheckpointError", "CheckpointVersionError", "PolicyParams",
    "deterministic_action", "forward", "init_params", "sample_action", "ReturnScaler", "RunningNorm",
]
