"""Inspect the dense reward terms along one decoded trajectory.

Shows the per-step breakdown (image similarity, state proximity, motion
penalties, obstacle penetration) for a random control-knot rollout, plus the
perfect-goal-match sanity value of 0.5.

Run: python demos/demo_rewards.py
"""

import numpy as np

from latentplan.core import SeededStream
from latentplan.valuation import (
    ReturnSpec,
    dense_reward,
    discounted_return,
    trajectory_terms,
)
from latentplan.worldgen import PointMassWorld, decode_knots, render


def main():
    world = PointMassWorld()
    goal_state = world.goal_state()
    goal_frame = render(world, goal_state)

    perfect = dense_reward(
        goal_frame, goal_frame, goal_state, goal_state, goal_state, goal_state,
        np.zeros(2), np.zeros(2), np.zeros(2),
    )
    print(f"perfect goal match scores exactly {perfect.total} (8 of 16 components at 1/16)\n")

    z = SeededStream(31).derive("latent").normal(world.latent_dim)
    traj = decode_knots(z, world)
    terms = trajectory_terms(traj, world)
    rewards = terms["total"] - 25.0 * terms["pen"]
    print("step  img_ssim  proximity  vel_pen  act_pen  penetration  total")
    for t in range(0, traj.horizon, 8):
        print(
            f"{t:4d}  {terms['c2'][t]:8.3f}  {terms['c5'][t]:9.3f}  "
            f"{terms['c6'][t]:7.3f}  {terms['c8'][t]:7.3f}  "
            f"{terms['pen'][t]:11.3f}  {terms['total'][t]:6.3f}"
        )
    ret = discounted_return(rewards, ReturnSpec(0.99, traj.horizon))
    print(f"\ndiscounted return of this rollout: {ret:.3f}")
    print(f"(a trajectory parked at the goal would earn about "
          f"{0.5 * (1 - 0.99 ** traj.horizon) / 0.01:.1f})")


if __name__ == "__main__":
    main()
