"""Plan a single point-mass episode and narrate what the planner does.

The planner keeps a Gaussian over control-knot latents, scores decoded
trajectories by the SNR of their value estimates, refits the distribution
from the elites, and finally decodes one action chunk. This script runs one
receding-horizon episode on the default world and prints the per-plan
progress toward the goal.

Run: python demos/demo_planning.py
"""

import numpy as np
from dataclasses import replace

from latentplan.config import ExperimentConfig
from latentplan.core import SeededStream
from latentplan.planner import plan
from latentplan.valuation import make_analytic_evaluator
from latentplan.worldgen import decode_knots, obstacle_penetration, rollout


def main():
    config = ExperimentConfig()
    world = config.world.build()
    vcfg = config.valuation
    goal = np.array(world.goal)
    threshold = vcfg.success_threshold_frac * world.diagonal
    stream = SeededStream(2024).derive("demo-episode")

    print(f"world: {world.workspace} goal={world.goal} obstacle={world.obstacles[0]}")
    print(f"success threshold: {threshold:.3f} (5% of the workspace diagonal)\n")

    state = np.array(world.start)
    penetrated = False
    executed = 0
    plan_idx = 0
    while executed < config.episode_steps:
        current = replace(world, start=tuple(state), check_clearance=False)
        evaluator = make_analytic_evaluator(
            current,
            gamma=vcfg.gamma,
            noise_scale=vcfg.noise_scale,
            value_len=vcfg.value_len,
            obstacle_weight=vcfg.obstacle_weight,
        )
        result = plan(
            lambda z, s, w=current: decode_knots(z, w),
            evaluator,
            config.planner,
            stream.derive(f"plan={plan_idx}"),
        )
        for stats in result.history:
            print(
                f"  iter {stats.iteration}: elite score {stats.mean_elite_phi:.3e}"
                f"  sigma_vid {stats.mean_sigma_vid:.3f}"
            )
        chunk = result.action_chunk[: config.stride]
        executed_traj = rollout(chunk, current, render_frames=False)
        if np.any(obstacle_penetration(world, executed_traj.states[:, :2]) > 0):
            penetrated = True
        state = executed_traj.states[-1]
        executed += chunk.shape[0]
        plan_idx += 1
        dist = np.linalg.norm(state[:2] - goal)
        print(
            f"plan {plan_idx}: executed {chunk.shape[0]} steps -> "
            f"pos ({state[0]:.2f}, {state[1]:.2f}), dist to goal {dist:.3f}\n"
        )

    final_dist = float(np.linalg.norm(state[:2] - goal))
    success = final_dist < threshold and not penetrated
    print(f"episode finished: dist={final_dist:.3f} penetrated={penetrated} success={success}")


if __name__ == "__main__":
    main()
