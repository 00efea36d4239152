"""Command-line harness: planning runs, ablations, geometry experiments,
staged flow training, and reward dumps.

Every command stages its outputs in a temp directory next to the target and
promotes them only on success; exit codes are 0 (success), 2 (configuration
error, message names the offending key), and 1 (runtime failure). The
`plan` command's metrics.csv contains only deterministic columns, so a
fixed (config, seed) reproduces it byte-for-byte at any worker count;
wall-clock timings live in history.csv and the aggregate tables.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    ExperimentConfig,
    dumps_config,
    load_config,
    replace_planner,
    validate_config,
)
from .core import SeededStream
from .episodes import aggregate, metrics_rows, run_episodes
from .flowmatch import init_mlp_field, make_flow_batch, save_field, train_step
from .geolab import PlantedLandscape, decay_curve, one_shot_vs_iterative, segment_family
from .metrics import RunManifest, StagedOutput, write_metrics
from .planner import PlannerConfig
from .valuation import ReturnSpec, discounted_return, step_rewards, trajectory_terms
from .worldgen import decode_knots

_METRICS_SCHEMA = ["episode", "success", "final_dist", "penetrated", "steps", "plan_calls"]
_HISTORY_SCHEMA = [
    "episode", "plan", "iter", "mean_elite_phi", "best_phi",
    "mean_sigma_vid", "mean_sigma_val", "wall_ms",
]
_DECAY_SCHEMA = ["H", "D", "n", "hits", "ratio", "ci_low", "ci_high", "log_ratio"]
_LATENT_SCHEMA = ["H", "n", "hits", "ratio", "ci_low", "ci_high", "reweight_ratio"]
_COMPARISON_SCHEMA = [
    "block", "arm", "repetitions", "hits", "hit_rate",
    "ci_low", "ci_high", "analytic_one_shot", "budget",
]
_SWEEP_KEYS = {"K": int, "M": int, "N": int, "K1": int, "K2": int,
               "alpha": float, "beta": float}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentplan",
        description="Latent trajectory planning experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "plan": "run planning episodes on the point-mass world",
        "ablate": "sweep a planner knob and aggregate success/wall-time",
        "geometry": "feasible-mass decay, latent reweighting, one-shot vs iterative",
        "train-flow": "staged flow-matching training (trajectory, value, action)",
        "reward-check": "per-step dense reward dump for one seeded trajectory",
    }
    for name, help_text in specs.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", default=None, help="TOML config path")
        sp.add_argument("--seed", type=int, default=None, help="master seed override")
        sp.add_argument("--out", default=None, help="output directory override")
        sp.add_argument("--workers", type=int, default=None, help="episode workers")
        if name == "ablate":
            sp.add_argument(
                "--sweep",
                default="K=0,1,3,5,10",
                help="KEY=V1,V2,... over one of K/M/N/K1/K2/alpha/beta",
            )
    return parser


def _resolve_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = dataclasses.replace(config, **overrides)
        validate_config(config)
    return config


def _new_manifest(command: str, config: ExperimentConfig) -> RunManifest:
    return RunManifest(
        command=command,
        seed=config.seed,
        code_version=__version__,
        config_text=dumps_config(config),
        started_at=time.time(),
    )


def cmd_plan(config: ExperimentConfig) -> None:
    staged = StagedOutput(config.out_dir)
    try:
        manifest = _new_manifest("plan", config)
        results = run_episodes(config)
        rows = metrics_rows(results)
        write_metrics(rows, _METRICS_SCHEMA, staged.path("metrics.csv"))
        history = [row for r in results for row in r.history_rows]
        write_metrics(history, _HISTORY_SCHEMA, staged.path("history.csv"))
        manifest.aggregate = aggregate(results)
        manifest.episodes = rows
        manifest.write(staged.path("manifest.json"))
    except BaseException:
        staged.discard()
        raise
    staged.promote()


def parse_sweep(sweep: str) -> tuple[str, list]:
    if "=" not in sweep:
        raise ConfigError(f"sweep: expected KEY=V1,V2,... got {sweep!r}")
    key, _, raw = sweep.partition("=")
    key = key.strip()
    if key not in _SWEEP_KEYS:
        raise ConfigError(f"sweep: unsupported key {key!r}")
    cast = _SWEEP_KEYS[key]
    try:
        values = [cast(v) for v in raw.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}") from exc
    if not values:
        raise ConfigError("sweep: no values given")
    return key, values


def cmd_ablate(config: ExperimentConfig, sweep: str) -> None:
    key, values = parse_sweep(sweep)
    staged = StagedOutput(config.out_dir)
    try:
        manifest = _new_manifest("ablate", config)
        cell_rows = []
        agg_rows = []
        for value in values:
            cell_config = replace_planner(config, **{key: value})
            results = run_episodes(cell_config)
            for r in results:
                cell_rows.append(
                    {
                        "cell_key": key,
                        "cell_value": value,
                        "episode": r.index,
                        "success": int(r.success),
                        "final_dist": r.final_dist,
                        "penetrated": int(r.penetrated),
                        "steps": r.steps,
                        "mean_plan_ms": float(np.mean(r.plan_wall_ms)),
                    }
                )
            summary = aggregate(results)
            agg_rows.append(
                {
                    "cell_key": key,
                    "cell_value": value,
                    "episodes": summary["episodes"],
                    "success_rate": summary["success_rate"],
                    "mean_plan_ms": summary["mean_plan_ms"],
                }
            )
        write_metrics(
            cell_rows,
            ["cell_key", "cell_value", "episode", "success", "final_dist",
             "penetrated", "steps", "mean_plan_ms"],
            staged.path("cells.csv"),
        )
        write_metrics(
            agg_rows,
            ["cell_key", "cell_value", "episodes", "success_rate", "mean_plan_ms"],
            staged.path("aggregate.csv"),
        )
        manifest.aggregate = {"sweep": key, "cells": agg_rows}
        manifest.write(staged.path("manifest.json"))
    except BaseException:
        staged.discard()
        raise
    staged.promote()


def _comparison_planner(gcfg) -> PlannerConfig:
    return PlannerConfig(
        K=gcfg.cmp_K,
        M=gcfg.cmp_M,
        N=gcfg.cmp_N,
        K1=gcfg.cmp_K1,
        K2=min(gcfg.cmp_K2, gcfg.cmp_M * gcfg.cmp_N),
        alpha=gcfg.cmp_alpha,
        beta=gcfg.cmp_beta,
        sigma_decay=gcfg.cmp_sigma_decay,
        d_vid=gcfg.cmp_latent_dim,
        d_val=4,
        chunk_len=1,
    )


def cmd_geometry(config: ExperimentConfig) -> None:
    gcfg = config.geolab
    stream = SeededStream(config.seed).derive("geometry")
    staged = StagedOutput(config.out_dir)
    try:
        manifest = _new_manifest("geometry", config)

        def family(H):
            d = 1
            if gcfg.intrinsic_rate > 0.0:
                d = max(1, int(round(gcfg.intrinsic_rate * H)))
            return segment_family(
                H, gcfg.dim_state, gcfg.dim_action,
                gcfg.epsilon, gcfg.delta, gcfg.off_scale,
                intrinsic_dim=d,
            )

        curve = decay_curve(
            gcfg.horizons, family, gcfg.n_uniform, stream.derive("decay"),
            n_latent=gcfg.n_latent,
        )
        decay_rows = [
            {
                "H": p.horizon,
                "D": p.ambient_dim,
                "n": p.uniform.samples_used,
                "hits": p.uniform.hits,
                "ratio": p.uniform.ratio,
                "ci_low": p.uniform.ci_low,
                "ci_high": p.uniform.ci_high,
                "log_ratio": p.log_ratio,
            }
            for p in curve.points
        ]
        latent_rows = [
            {
                "H": p.horizon,
                "n": p.latent.samples_used,
                "hits": p.latent.hits,
                "ratio": p.latent.ratio,
                "ci_low": p.latent.ci_low,
                "ci_high": p.latent.ci_high,
                "reweight_ratio": p.reweight_ratio,
            }
            for p in curve.points
            if p.latent is not None
        ]
        planner_cfg = _comparison_planner(gcfg)
        comparison_rows = []
        comparison_summary = {}
        for block, p in (
            ("calibration", gcfg.cmp_p_oneshot),
            ("advantage", gcfg.cmp_p_advantage),
        ):
            landscape = PlantedLandscape(
                latent_dim=gcfg.cmp_latent_dim, prior_mass=p
            )
            result = one_shot_vs_iterative(
                landscape,
                gcfg.cmp_budget,
                planner_cfg,
                gcfg.cmp_repetitions,
                stream.derive(f"comparison/{block}"),
            )
            for arm_name, arm in (("one_shot", result.one_shot), ("iterative", result.iterative)):
                comparison_rows.append(
                    {
                        "block": block,
                        "arm": arm_name,
                        "repetitions": arm.repetitions,
                        "hits": arm.hits,
                        "hit_rate": arm.hit_rate,
                        "ci_low": arm.ci_low,
                        "ci_high": arm.ci_high,
                        "analytic_one_shot": result.analytic_one_shot,
                        "budget": result.budget,
                    }
                )
            comparison_summary[block] = {
                "p": p,
                "one_shot": result.one_shot.hit_rate,
                "iterative": result.iterative.hit_rate,
                "analytic_one_shot": result.analytic_one_shot,
            }
        write_metrics(decay_rows, _DECAY_SCHEMA, staged.path("decay.csv"))
        write_metrics(latent_rows, _LATENT_SCHEMA, staged.path("latent.csv"))
        write_metrics(comparison_rows, _COMPARISON_SCHEMA, staged.path("comparison.csv"))
        summary = {
            "slope": curve.slope,
            "r_squared": curve.r_squared,
            "points": decay_rows,
            "reweight_ratios": {
                str(row["H"]): row["reweight_ratio"] for row in latent_rows
            },
            "comparison": comparison_summary,
        }
        staged.path("summary.json").write_text(json.dumps(summary, indent=2))
        manifest.aggregate = {
            "slope": curve.slope,
            "r_squared": curve.r_squared,
            "comparison": comparison_summary,
        }
        manifest.write(staged.path("manifest.json"))
    except BaseException:
        staged.discard()
        raise
    staged.promote()


def _standardize(values: np.ndarray) -> tuple[np.ndarray, float, float]:
    mean = float(values.mean())
    std = float(values.std())
    std = std if std > 1e-12 else 1.0
    return (values - mean) / std, mean, std


def cmd_train_flow(config: ExperimentConfig) -> None:
    fcfg = config.flow
    vcfg = config.valuation
    world = config.world.build()
    stream = SeededStream(config.seed).derive("train-flow")
    staged = StagedOutput(config.out_dir)
    try:
        manifest = _new_manifest("train-flow", config)
        # Behavior dataset: prior rollouts filtered to the high-return
        # fraction, standing in for expert demonstrations.
        n = fcfg.dataset
        Z = stream.derive("data").normal((n, world.latent_dim))
        knot_vecs = np.tanh(Z.reshape(n, world.knots, 2)) * world.accel_limit
        knot_vecs = knot_vecs.reshape(n, -1)
        return_spec = ReturnSpec(vcfg.gamma, world.horizon)
        returns = np.empty(n)
        chunks = np.empty((n, config.planner.chunk_len * 2))
        for i in range(n):
            traj = decode_knots(Z[i], world)
            rewards = step_rewards(
                traj, world, vcfg.weights(), vcfg.obstacle_weight
            )
            returns[i] = discounted_return(rewards, return_spec)
            chunks[i] = traj.actions[: config.planner.chunk_len].ravel()
        keep = max(1, int(round(n * fcfg.elite_frac)))
        elite = np.argsort(-returns, kind="stable")[:keep]
        knot_vecs, returns, chunks = knot_vecs[elite], returns[elite], chunks[elite]
        ret_std, ret_mean, ret_scale = _standardize(returns)

        stages = [
            ("vid", np.zeros((keep, 0)), knot_vecs, fcfg.steps_vid, fcfg.lr_vid),
            ("val", knot_vecs, ret_std[:, None], fcfg.steps_val, fcfg.lr_val),
            (
                "act",
                np.concatenate([knot_vecs, ret_std[:, None]], axis=1),
                chunks,
                fcfg.steps_act,
                fcfg.lr_act,
            ),
        ]
        loss_rows = []
        stage_summary = {}
        for name, cond, x1, steps, lr in stages:
            field = init_mlp_field(
                cond.shape[1], x1.shape[1], fcfg.hidden, stream.derive(f"{name}/init")
            )
            state = None
            sstream = stream.derive(f"{name}/train")
            for step in range(steps):
                bstream = sstream.derive(f"step={step}")
                idx = (bstream.derive("idx").uniform(fcfg.batch) * keep).astype(int)
                x0 = bstream.derive("x0").normal((fcfg.batch, x1.shape[1]))
                batch = make_flow_batch(x0, x1[idx], cond[idx], bstream.derive("t"))
                field, state, loss = train_step(field, batch, lr, state)
                loss_rows.append({"stage": name, "step": step, "loss": loss})
            meta = {
                "stage": name,
                "hidden": fcfg.hidden,
                "lr": lr,
                "steps": steps,
                "return_mean": ret_mean,
                "return_std": ret_scale,
                "seed": config.seed,
            }
            save_field(field, staged.path(name), meta=meta)
            stage_summary[name] = {"final_loss": loss_rows[-1]["loss"], "steps": steps}
        write_metrics(loss_rows, ["stage", "step", "loss"], staged.path("losses.csv"))
        manifest.aggregate = stage_summary
        manifest.write(staged.path("manifest.json"))
    except BaseException:
        staged.discard()
        raise
    staged.promote()


def cmd_reward_check(config: ExperimentConfig) -> None:
    world = config.world.build()
    vcfg = config.valuation
    stream = SeededStream(config.seed).derive("reward-check")
    staged = StagedOutput(config.out_dir)
    try:
        manifest = _new_manifest("reward-check", config)
        z = stream.derive("latent").normal(world.latent_dim)
        traj = decode_knots(z, world)
        terms = trajectory_terms(traj, world, vcfg.weights())
        rows = []
        for t in range(traj.horizon):
            row = {"step": t}
            row.update({f"c{i}": float(terms[f"c{i}"][t]) for i in range(1, 10)})
            row["total"] = float(terms["total"][t])
            row["penetration"] = float(terms["pen"][t])
            row["reward"] = float(
                terms["total"][t] - vcfg.obstacle_weight * terms["pen"][t]
            )
            rows.append(row)
        schema = ["step"] + [f"c{i}" for i in range(1, 10)] + [
            "total", "penetration", "reward",
        ]
        write_metrics(rows, schema, staged.path("rewards.csv"))
        manifest.aggregate = {
            "steps": traj.horizon,
            "mean_reward": float(np.mean([r["reward"] for r in rows])),
        }
        manifest.write(staged.path("manifest.json"))
    except BaseException:
        staged.discard()
        raise
    staged.promote()


def run_command(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        config = _resolve_config(args)
        if args.command == "plan":
            cmd_plan(config)
        elif args.command == "ablate":
            cmd_ablate(config, args.sweep)
        elif args.command == "geometry":
            cmd_geometry(config)
        elif args.command == "train-flow":
            cmd_train_flow(config)
        elif args.command == "reward-check":
            cmd_reward_check(config)
        else:  # pragma: no cover - argparse enforces the choices
            return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
