"""Iterative latent trajectory planning.

Each planning call maintains two diagonal Gaussians: one over trajectory
("video") latents and one over value latents. Every iteration samples M
trajectory latents, decodes each through a generator, scores M x N value
samples by their signal-to-noise ratio, refits both Gaussians from the
elite latents, then applies variance decay, exponential smoothing against
the previous distributions, and a variance floor. After K iterations one
final latent pair is drawn and decoded; by default the best latent pair
seen during refinement is kept if the final draw scores worse.

The generator is any callable (z_vid, stream) -> decoded trajectory, and
the evaluator any callable (decoded, (N, d_val) latents) -> (N, L) value
samples. Both are supplied by worldgen/valuation factories or by synthetic
landscapes in the geometry lab.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    DiagonalGaussian,
    SeededStream,
    floor_std,
    gaussian_blend,
    gaussian_fit,
    gaussian_sample,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlannerConfig:
    """All planning knobs; bounds are enforced at construction."""

    K: int = 3
    M: int = 16
    N: int = 8
    K1: int = 4
    K2: int = 16
    alpha: float = 0.9
    beta: float = 0.5
    eps: float = 1e-6
    sigma_min: float = 1e-3
    sigma_decay: float = 0.85
    chunk_len: int = 16
    d_vid: int = 16
    d_val: int = 8
    final_draw: str = "best"
    warm_start: bool = False

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be >= 1")
        if not 1 <= self.K1 <= self.M:
            raise ValueError("need 1 <= K1 <= M")
        if not 1 <= self.K2 <= self.M * self.N:
            raise ValueError("need 1 <= K2 <= M * N")
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValueError("alpha and beta must lie in [0, 1]")
        if self.eps < 0.0:
            raise ValueError("eps must be >= 0")
        if self.sigma_min <= 0.0:
            raise ValueError("sigma_min must be positive")
        if not 0.0 < self.sigma_decay <= 1.0:
            raise ValueError("sigma_decay must lie in (0, 1]")
        if self.chunk_len < 1 or self.d_vid < 1 or self.d_val < 1:
            raise ValueError("chunk_len and latent dimensions must be positive")
        if self.final_draw not in ("best", "sample"):
            raise ValueError("final_draw must be 'best' or 'sample'")


@dataclass(frozen=True)
class PlannerState:
    f_vid: DiagonalGaussian
    f_val: DiagonalGaussian
    k: int = 0
    best_score: float = -np.inf
    best_latents: tuple[np.ndarray, np.ndarray] | None = None
    best_decoded: object | None = None

    @staticmethod
    def initial(config: PlannerConfig) -> "PlannerState":
        return PlannerState(
            f_vid=floor_std(DiagonalGaussian.standard(config.d_vid), config.sigma_min),
            f_val=floor_std(DiagonalGaussian.standard(config.d_val), config.sigma_min),
        )


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    mean_elite_phi: float
    best_phi: float
    mean_sigma_vid: float
    mean_sigma_val: float
    wall_ms: float


@dataclass(frozen=True)
class PlanResult:
    action_chunk: np.ndarray | None
    trajectory: object
    z_vid: np.ndarray
    z_val: np.ndarray
    score: float
    best_score: float
    history: tuple[IterationStats, ...]
    state: PlannerState
    sampled_vid_latents: np.ndarray
    wall_ms_iterate: float
    wall_ms_final: float


def select_elites(scores: np.ndarray, K: int) -> np.ndarray:
    """Indices of the K largest scores; ties broken by lowest index."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 1 <= K <= scores.shape[0]:
        raise ValueError("need 1 <= K <= len(scores)")
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:K])


def _snr_matrix(values: np.ndarray, eps: float) -> np.ndarray:
    """Row-wise mean / (population std + eps) for an (N, L) value array."""
    mean = values.mean(axis=1)
    std = values.std(axis=1, ddof=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return mean / (std + eps)


def iterate(
    state: PlannerState,
    generator,
    evaluator,
    config: PlannerConfig,
    stream: SeededStream,
) -> tuple[PlannerState, IterationStats]:
    """One refinement step: sample, decode, score, select elites, refit."""
    t0 = time.perf_counter()
    k = state.k + 1
    iter_stream = stream.derive(f"iter={k}")
    z_vid = gaussian_sample(state.f_vid, iter_stream.derive("vid"), config.M)
    z_val = gaussian_sample(
        state.f_val, iter_stream.derive("val"), config.M * config.N
    ).reshape(config.M, config.N, config.d_val)

    snr_scores = np.empty((config.M, config.N))
    decoded = []
    for m in range(config.M):
        traj = generator(z_vid[m], iter_stream.derive(f"decode={m}"))
        decoded.append(traj)
        values = np.asarray(evaluator(traj, z_val[m]), dtype=np.float64)
        if values.shape[0] != config.N:
            raise ValueError("evaluator must return one value sample per latent")
        snr_scores[m] = _snr_matrix(values, config.eps)

    finite = np.isfinite(snr_scores)
    if not finite.any():
        raise RuntimeError("all value scores are non-finite")
    if not finite.all():
        bad = np.argwhere(~finite)
        logger.warning(
            "excluding %d non-finite scores at iteration %d (sample indices %s)",
            bad.shape[0], k, bad[:8].tolist(),
        )

    masked = np.where(finite, snr_scores, -np.inf)
    phi = masked.max(axis=1)
    valid_m = np.flatnonzero(np.isfinite(phi))
    k1 = min(config.K1, valid_m.size)
    elite_vid = valid_m[select_elites(phi[valid_m], k1)]

    flat = masked.reshape(-1)
    valid_pairs = np.flatnonzero(np.isfinite(flat))
    k2 = min(config.K2, valid_pairs.size)
    elite_val = valid_pairs[select_elites(flat[valid_pairs], k2)]

    f_vid = _refit(z_vid[elite_vid], state.f_vid, config.alpha, config.beta, config)
    f_val = _refit(
        z_val.reshape(-1, config.d_val)[elite_val],
        state.f_val,
        config.alpha,
        config.beta,
        config,
    )

    best_score = state.best_score
    best_latents = state.best_latents
    best_decoded = state.best_decoded
    m_star = int(valid_m[np.argmax(phi[valid_m])])
    if phi[m_star] > best_score:
        n_star = int(np.argmax(masked[m_star]))
        best_score = float(phi[m_star])
        best_latents = (z_vid[m_star].copy(), z_val[m_star, n_star].copy())
        best_decoded = decoded[m_star]

    new_state = replace(
        state,
        f_vid=f_vid,
        f_val=f_val,
        k=k,
        best_score=best_score,
        best_latents=best_latents,
        best_decoded=best_decoded,
    )
    stats = IterationStats(
        iteration=k,
        mean_elite_phi=float(phi[elite_vid].mean()),
        best_phi=best_score,
        mean_sigma_vid=float(f_vid.std.mean()),
        mean_sigma_val=float(f_val.std.mean()),
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )
    return new_state, stats


def _refit(
    elites: np.ndarray,
    previous: DiagonalGaussian,
    alpha: float,
    beta: float,
    config: PlannerConfig,
) -> DiagonalGaussian:
    fit = gaussian_fit(elites)
    decayed = DiagonalGaussian(fit.mean, fit.std * config.sigma_decay)
    blended = gaussian_blend(decayed, previous, alpha, beta)
    return floor_std(blended, config.sigma_min)


def final_decode(
    state: PlannerState,
    generator,
    evaluator,
    config: PlannerConfig,
    stream: SeededStream,
    history: tuple[IterationStats, ...] = (),
    sampled_vid_latents: np.ndarray | None = None,
    wall_ms_iterate: float = 0.0,
) -> PlanResult:
    """Draw one latent pair from the refined distributions and decode it.

    With final_draw = "best", a draw scoring below the running best is
    replaced by the best latent pair seen during refinement; "sample"
    keeps the literal draw.
    """
    t0 = time.perf_counter()
    fstream = stream.derive("final")
    z_vid = gaussian_sample(state.f_vid, fstream.derive("vid"), 1)[0]
    z_val = gaussian_sample(state.f_val, fstream.derive("val"), 1)[0]
    decoded = generator(z_vid, fstream.derive("decode"))
    values = np.asarray(evaluator(decoded, z_val[None, :]), dtype=np.float64)
    score = float(_snr_matrix(values, config.eps)[0])
    if not np.isfinite(score):
        raise RuntimeError("final draw produced a non-finite score")
    if (
        config.final_draw == "best"
        and state.best_latents is not None
        and state.best_score > score
    ):
        z_vid, z_val = state.best_latents
        decoded = state.best_decoded
        score = state.best_score

    action_chunk = None
    actions = getattr(decoded, "actions", None)
    if actions is not None:
        if config.chunk_len > actions.shape[0]:
            raise ValueError("chunk_len exceeds the decoded horizon")
        action_chunk = actions[: config.chunk_len]

    return PlanResult(
        action_chunk=action_chunk,
        trajectory=decoded,
        z_vid=z_vid,
        z_val=z_val,
        score=score,
        best_score=max(state.best_score, score),
        history=history,
        state=state,
        sampled_vid_latents=(
            sampled_vid_latents
            if sampled_vid_latents is not None
            else np.empty((0, config.d_vid))
        ),
        wall_ms_iterate=wall_ms_iterate,
        wall_ms_final=(time.perf_counter() - t0) * 1e3,
    )


def plan(
    generator,
    evaluator,
    config: PlannerConfig,
    stream: SeededStream,
    init_state: PlannerState | None = None,
) -> PlanResult:
    """Run K refinement iterations then decode a final action.

    K = 0 skips refinement entirely and decodes a single draw from the
    standard-Gaussian priors. Identical (config, stream) always produce an
    identical result regardless of how callers parallelize around this.
    """
    state = init_state if init_state is not None else PlannerState.initial(config)
    if state.f_vid.dim != config.d_vid or state.f_val.dim != config.d_val:
        raise ValueError("planner state dimensions do not match the config")
    history: list[IterationStats] = []
    sampled = []
    wall_iter = 0.0
    for _ in range(config.K):
        iter_stream = stream.derive(f"iter={state.k + 1}")
        sampled.append(gaussian_sample(state.f_vid, iter_stream.derive("vid"), config.M))
        state, stats = iterate(state, generator, evaluator, config, stream)
        history.append(stats)
        wall_iter += stats.wall_ms
    all_sampled = (
        np.concatenate(sampled, axis=0) if sampled else np.empty((0, config.d_vid))
    )
    return final_decode(
        state,
        generator,
        evaluator,
        config,
        stream,
        history=tuple(history),
        sampled_vid_latents=all_sampled,
        wall_ms_iterate=wall_iter,
    )
