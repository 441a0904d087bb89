"""PPO on a 2-D point-reach task.

A cheap end-to-end check of the hand-written PPO: a double integrator has to reach
a random goal. Prints the learning curve as it goes and the greedy success rate at
the end (typically 100% within 200k steps, under a minute).

    python3 demos/ppo_point_reach.py [total_steps]
"""
import sys

from endonav.ppo import TrainConfig, train
from endonav.ppo.toy import PointReach, success_rate
from endonav.ppo.algo import Policy

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
cfg = TrainConfig(total_timesteps=steps, n_workers=4, rollout_steps=2048, minibatch_size=256,
                  epochs=10, hidden=(64, 64), checkpoint_every=10 ** 6, seed=0)


def show(row):
    if row["update"] % 10 == 0:
        print(f"{row['timestep']:8d} steps  reward {row['mean_reward']:8.2f}  success {row['sr']:.2f}")


params, curve, trainer = train(lambda w: PointReach(), cfg, on_update=show)
policy = Policy(params, trainer.obs_norm, cfg.action_limit, "toy")
print(f"greedy success over 100 fresh goals: {100 * success_rate(policy):.0f}%")
