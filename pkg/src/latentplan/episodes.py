"""Receding-horizon planning episodes on the point-mass world.

An episode re-plans every `stride` executed steps: each plan sees the world
re-rooted at the current state, and only the first `stride` actions of the
returned chunk are executed through the true dynamics. Success requires the
final position within a fixed fraction of the workspace diagonal of the
goal and zero obstacle penetration at any executed step.

Episodes derive their randomness from (seed, episode index) only, so sweep
cells share common random numbers and results are identical for any worker
count.
"""

from __future__ import annotations

import multiprocessing
import time
from dataclasses import dataclass, replace as dc_replace
from functools import partial

import numpy as np

from .config import ExperimentConfig
from .core import SeededStream
from .planner import PlannerState, plan
from .valuation import make_analytic_evaluator
from .worldgen import decode_knots, obstacle_penetration, rollout


@dataclass(frozen=True)
class EpisodeResult:
    index: int
    success: bool
    final_dist: float
    penetrated: bool
    steps: int
    plan_calls: int
    best_scores: tuple[float, ...]
    plan_wall_ms: tuple[float, ...]
    history_rows: tuple[dict, ...]


def episode_stream(seed: int, index: int) -> SeededStream:
    return SeededStream(seed).derive(f"episode={index}")


def success_threshold(config: ExperimentConfig) -> float:
    world = config.world.build()
    return config.valuation.success_threshold_frac * world.diagonal


def run_episode(index: int, config: ExperimentConfig) -> EpisodeResult:
    world = config.world.build()
    vcfg = config.valuation
    pcfg = config.planner
    stream = episode_stream(config.seed, index)
    state_vec = np.array(world.start)
    penetrated = False
    executed = 0
    plan_idx = 0
    warm_state = None
    best_scores: list[float] = []
    wall_ms: list[float] = []
    history_rows: list[dict] = []
    while executed < config.episode_steps:
        current = dc_replace(world, start=tuple(state_vec), check_clearance=False)
        evaluator = make_analytic_evaluator(
            current,
            gamma=vcfg.gamma,
            noise_scale=vcfg.noise_scale,
            value_len=vcfg.value_len,
            weights=vcfg.weights(),
            obstacle_weight=vcfg.obstacle_weight,
        )

        def generator(z, stream, _world=current):
            return decode_knots(z, _world)

        t0 = time.perf_counter()
        result = plan(
            generator,
            evaluator,
            pcfg,
            stream.derive(f"plan={plan_idx}"),
            init_state=warm_state,
        )
        wall_ms.append((time.perf_counter() - t0) * 1e3)
        best_scores.append(result.best_score)
        for stats in result.history:
            history_rows.append(
                {
                    "episode": index,
                    "plan": plan_idx,
                    "iter": stats.iteration,
                    "mean_elite_phi": stats.mean_elite_phi,
                    "best_phi": stats.best_phi,
                    "mean_sigma_vid": stats.mean_sigma_vid,
                    "mean_sigma_val": stats.mean_sigma_val,
                    "wall_ms": stats.wall_ms,
                }
            )
        take = min(config.stride, config.episode_steps - executed)
        chunk = result.action_chunk[:take]
        exec_traj = rollout(chunk, current, render_frames=False)
        if np.any(obstacle_penetration(world, exec_traj.states[:, :2]) > 0.0):
            penetrated = True
        state_vec = exec_traj.states[-1]
        executed += take
        plan_idx += 1
        if pcfg.warm_start:
            # Carry the refined distributions forward, but drop the stale
            # best-trajectory bookkeeping: it belongs to the previous root.
            warm_state = PlannerState(
                f_vid=result.state.f_vid, f_val=result.state.f_val
            )
    final_dist = float(np.linalg.norm(state_vec[:2] - np.array(world.goal)))
    threshold = vcfg.success_threshold_frac * world.diagonal
    return EpisodeResult(
        index=index,
        success=bool(final_dist < threshold and not penetrated),
        final_dist=final_dist,
        penetrated=penetrated,
        steps=executed,
        plan_calls=plan_idx,
        best_scores=tuple(best_scores),
        plan_wall_ms=tuple(wall_ms),
        history_rows=tuple(history_rows),
    )


def run_episodes(config: ExperimentConfig, workers: int | None = None) -> list[EpisodeResult]:
    """All episodes of a run, optionally on a process pool.

    Episode randomness never depends on worker count or scheduling, and
    results come back ordered by index, so metrics are byte-identical for
    any `workers` value.
    """
    workers = config.workers if workers is None else workers
    indices = list(range(config.episodes))
    if workers <= 1:
        return [run_episode(i, config) for i in indices]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(processes=workers) as pool:
        return pool.map(partial(_episode_task, config=config), indices)


def _episode_task(index: int, config: ExperimentConfig) -> EpisodeResult:
    return run_episode(index, config)


def metrics_rows(results: list[EpisodeResult]) -> list[dict]:
    return [
        {
            "episode": r.index,
            "success": int(r.success),
            "final_dist": r.final_dist,
            "penetrated": int(r.penetrated),
            "steps": r.steps,
            "plan_calls": r.plan_calls,
        }
        for r in results
    ]


def aggregate(results: list[EpisodeResult]) -> dict:
    n = len(results)
    mean_ms = float(np.mean([np.mean(r.plan_wall_ms) for r in results])) if n else 0.0
    return {
        "episodes": n,
        "success_rate": float(np.mean([r.success for r in results])) if n else 0.0,
        "mean_final_dist": float(np.mean([r.final_dist for r in results])) if n else 0.0,
        "mean_plan_ms": mean_ms,
    }
