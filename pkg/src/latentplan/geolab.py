"""Monte Carlo geometry experiments on feasible-trajectory mass.

Three empirical checks live here. First, the fraction of a bounded
trajectory box that lies within epsilon of a thin affine patch, estimated
by uniform rejection sampling with exact (Clopper-Pearson) binomial
confidence intervals, swept over growing horizons to exhibit the
exponential decay of feasible mass. Second, the same feasibility
probability under the latent generator, whose off-manifold emission rate
delta is planted, so the latent-to-uniform reweighting ratio can be
measured directly. Third, an equal-budget comparison of one-shot prior
sampling against iterative latent refinement on a landscape with a planted
rare high-value region of known prior mass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtri
from scipy.stats import beta as beta_dist

from .core import SeededStream
from .planner import PlannerConfig, plan
from .worldgen import AffineManifoldSpec, TrajectorySpace, manifold_distance

logger = logging.getLogger(__name__)

_CHUNK = 1 << 18


@dataclass(frozen=True)
class MassEstimate:
    """Binomial feasibility estimate with an exact 95% confidence interval."""

    ratio: float
    samples_used: int
    hits: int
    ci_low: float
    ci_high: float

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


@dataclass(frozen=True)
class DecayPoint:
    horizon: int
    ambient_dim: int
    uniform: MassEstimate
    log_ratio: float
    included_in_fit: bool
    latent: MassEstimate | None = None
    reweight_ratio: float | None = None


@dataclass(frozen=True)
class DecayCurve:
    points: tuple[DecayPoint, ...]
    slope: float
    r_squared: float


@dataclass(frozen=True)
class ArmResult:
    hit_rate: float
    hits: int
    repetitions: int
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class ComparisonResult:
    one_shot: ArmResult
    iterative: ArmResult
    analytic_one_shot: float
    budget: int


def clopper_pearson(hits: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval; tight at ratios near 0 and 1."""
    if n < 1 or not 0 <= hits <= n:
        raise ValueError("need 0 <= hits <= n with n >= 1")
    alpha = 1.0 - confidence
    low = 0.0 if hits == 0 else float(beta_dist.ppf(alpha / 2.0, hits, n - hits + 1))
    high = 1.0 if hits == n else float(beta_dist.ppf(1.0 - alpha / 2.0, hits + 1, n - hits))
    return low, high


def _estimate(hits: int, n: int) -> MassEstimate:
    low, high = clopper_pearson(hits, n)
    return MassEstimate(ratio=hits / n, samples_used=n, hits=hits, ci_low=low, ci_high=high)


def estimate_feasible_mass(
    spec: AffineManifoldSpec,
    space: TrajectorySpace,
    n_samples: int,
    stream: SeededStream,
) -> MassEstimate:
    """Fraction of uniform draws from the box within epsilon of the patch."""
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    if space.ambient_dim != spec.ambient_dim:
        raise ValueError("manifold and space dimensions disagree")
    hits = 0
    done = 0
    chunk_idx = 0
    while done < n_samples:
        take = min(_CHUNK, n_samples - done)
        pts = space.sample_uniform(stream.derive(f"chunk={chunk_idx}"), take)
        dist = manifold_distance(pts, spec)
        hits += int(np.count_nonzero(dist <= spec.epsilon))
        done += take
        chunk_idx += 1
    return _estimate(hits, n_samples)


def estimate_latent_mass(
    spec: AffineManifoldSpec, n_samples: int, stream: SeededStream
) -> MassEstimate:
    """Feasible fraction under standard-normal latents pushed through the
    affine decoder. On-manifold decodes are feasible by construction and
    off-manifold emissions (off_scale > 1) are infeasible by construction,
    so the expected ratio is exactly 1 - delta."""
    from .worldgen import _decode_affine_batch

    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    hits = 0
    done = 0
    chunk_idx = 0
    while done < n_samples:
        take = min(_CHUNK, n_samples - done)
        sub = stream.derive(f"chunk={chunk_idx}")
        Z = sub.derive("z").normal((take, spec.intrinsic_dim))
        pts, _ = _decode_affine_batch(Z, spec, sub.derive("decode"))
        dist = manifold_distance(pts, spec)
        hits += int(np.count_nonzero(dist <= spec.epsilon))
        done += take
        chunk_idx += 1
    return _estimate(hits, n_samples)


def unit_ball_volume(k: int) -> float:
    """Volume of the k-dimensional unit Euclidean ball (1.0 for k = 0)."""
    if k < 0:
        raise ValueError("dimension must be non-negative")
    return float(np.exp(0.5 * k * np.log(np.pi) - gammaln(0.5 * k + 1.0)))


def stadium_volume(ambient_dim: int, epsilon: float, length: float = 1.0) -> float:
    """Closed-form volume of the epsilon-tube around a segment: a cylinder of
    the segment's length plus two half-balls."""
    D = ambient_dim
    return (
        length * unit_ball_volume(D - 1) * epsilon ** (D - 1)
        + unit_ball_volume(D) * epsilon**D
    )


def segment_family(
    horizon: int,
    dim_state: int = 1,
    dim_action: int = 1,
    epsilon: float = 0.05,
    delta: float = 0.0,
    off_scale: float = 2.0,
    intrinsic_dim: int = 1,
) -> tuple[AffineManifoldSpec, TrajectorySpace]:
    """An axis-aligned unit patch of dimension `intrinsic_dim` embedded in
    the horizon-H trajectory box, with the box hugging the tube: patch
    coordinates span [-eps, 1 + eps] and every other coordinate a
    width-2*eps slab. For intrinsic_dim = 1 the tube is entirely inside the
    box, so stadium_volume / space.volume is the exact feasible-mass ratio
    at every horizon. Growing intrinsic_dim with the horizon reproduces the
    alternative d = lambda * H regime.
    """
    D = horizon * (dim_state + dim_action)
    d = intrinsic_dim
    if not 1 <= d < D:
        raise ValueError("need 1 <= intrinsic_dim < ambient dimension")
    basis = np.zeros((D, d))
    basis[:d, :] = np.eye(d)
    offset = np.full(D, 0.5)
    offset[:d] = 0.0
    bounds = np.empty((D, 2))
    bounds[:d] = (-epsilon, 1.0 + epsilon)
    bounds[d:] = (0.5 - epsilon, 0.5 + epsilon)
    spec = AffineManifoldSpec(
        basis=basis, offset=offset, epsilon=epsilon, delta=delta, off_scale=off_scale
    )
    space = TrajectorySpace(
        horizon=horizon, dim_state=dim_state, dim_action=dim_action, bounds=bounds
    )
    return spec, space


def fit_log_decay(horizons: np.ndarray, log_ratios: np.ndarray) -> tuple[float, float]:
    """Least-squares slope and R^2 of log-ratio against horizon."""
    h = np.asarray(horizons, dtype=np.float64)
    y = np.asarray(log_ratios, dtype=np.float64)
    if h.shape != y.shape or h.size < 2:
        raise ValueError("need at least two (horizon, log_ratio) points")
    slope, intercept = np.polyfit(h, y, 1)
    pred = slope * h + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), r_squared


def decay_curve(
    horizons,
    make_family,
    n_samples: int,
    stream: SeededStream,
    n_latent: int = 0,
) -> DecayCurve:
    """Uniform feasible-mass estimates across a horizon sweep, log-fitted.

    `make_family` maps a horizon to an (AffineManifoldSpec, TrajectorySpace)
    pair with fixed intrinsic dimension. Zero-hit points are flagged and
    excluded from the fit rather than imputed. With n_latent > 0 the latent
    feasible mass and the latent/uniform reweighting ratio are reported per
    horizon as well.
    """
    horizons = list(horizons)
    if len(horizons) < 3:
        raise ValueError("need at least three horizons")
    points: list[DecayPoint] = []
    for H in horizons:
        spec, space = make_family(H)
        est = estimate_feasible_mass(
            spec, space, n_samples, stream.derive(f"uniform/H={H}")
        )
        latent = None
        reweight = None
        if n_latent > 0:
            latent = estimate_latent_mass(spec, n_latent, stream.derive(f"latent/H={H}"))
            reweight = latent.ratio / est.ratio if est.ratio > 0.0 else np.inf
        included = est.hits > 0
        if not included:
            logger.warning("zero hits at horizon %d; point excluded from fit", H)
        log_ratio = np.log(est.ratio) if est.hits > 0 else -np.inf
        points.append(
            DecayPoint(
                horizon=H,
                ambient_dim=space.ambient_dim,
                uniform=est,
                log_ratio=float(log_ratio),
                included_in_fit=included,
                latent=latent,
                reweight_ratio=reweight,
            )
        )
    fit_pts = [p for p in points if p.included_in_fit]
    if len(fit_pts) < 2:
        raise RuntimeError("too few nonzero mass estimates to fit a decay slope")
    slope, r_squared = fit_log_decay(
        np.array([p.horizon for p in fit_pts], dtype=np.float64),
        np.array([p.log_ratio for p in fit_pts]),
    )
    return DecayCurve(points=tuple(points), slope=slope, r_squared=r_squared)


@dataclass(frozen=True)
class PlantedLandscape:
    """Synthetic latent landscape with a rare high-value region.

    The target set {z : z[0] >= threshold} has standard-normal prior mass
    exactly `prior_mass`; the stochastic value of a latent increases with
    z[0], so adaptive refinement drifts toward the target.
    """

    latent_dim: int = 8
    prior_mass: float = 0.01
    noise_scale: float = 0.05
    value_len: int = 4

    def __post_init__(self):
        if not 0.0 < self.prior_mass <= 1.0:
            raise ValueError("prior_mass must lie in (0, 1]")
        if self.latent_dim < 1 or self.value_len < 2:
            raise ValueError("latent_dim >= 1 and value_len >= 2 required")

    @property
    def threshold(self) -> float:
        return float(ndtri(1.0 - self.prior_mass)) if self.prior_mass < 1.0 else -np.inf

    def hits(self, latents: np.ndarray) -> np.ndarray:
        return np.atleast_2d(latents)[:, 0] >= self.threshold

    def generator(self, z: np.ndarray, stream: SeededStream) -> np.ndarray:
        return z

    def evaluator(self, decoded: np.ndarray, z_vals: np.ndarray) -> np.ndarray:
        base = float(np.asarray(decoded)[0])
        Z = np.atleast_2d(z_vals)
        return base + self.noise_scale * Z[:, : self.value_len]


def one_shot_vs_iterative(
    landscape: PlantedLandscape,
    budget: int,
    config: PlannerConfig,
    repetitions: int,
    stream: SeededStream,
) -> ComparisonResult:
    """Hit frequency of the planted region under equal evaluation budgets.

    The one-shot arm draws `budget` prior latents per repetition and counts
    a hit when any lands in the region; its analytic hit rate is
    1 - (1 - p)^budget. The iterative arm runs the planner with the same
    total budget (budget = K * M * N enforced) and counts a hit when any
    refinement-sampled trajectory latent lands in the region.
    """
    if budget != config.K * config.M * config.N:
        raise ValueError("budget must equal K * M * N of the planner config")
    if repetitions < 1:
        raise ValueError("repetitions must be positive")
    if config.d_vid != landscape.latent_dim:
        raise ValueError("config.d_vid must match the landscape latent dimension")
    one_shot_hits = 0
    iterative_hits = 0
    for rep in range(repetitions):
        rep_stream = stream.derive(f"rep={rep}")
        Z = rep_stream.derive("oneshot").normal((budget, landscape.latent_dim))
        one_shot_hits += bool(landscape.hits(Z).any())
        result = plan(
            landscape.generator,
            landscape.evaluator,
            config,
            rep_stream.derive("planner"),
        )
        iterative_hits += bool(landscape.hits(result.sampled_vid_latents).any())
    analytic = 1.0 - (1.0 - landscape.prior_mass) ** budget

    def arm(hits: int) -> ArmResult:
        low, high = clopper_pearson(hits, repetitions)
        return ArmResult(
            hit_rate=hits / repetitions,
            hits=hits,
            repetitions=repetitions,
            ci_low=low,
            ci_high=high,
        )

    return ComparisonResult(
        one_shot=arm(one_shot_hits),
        iterative=arm(iterative_hits),
        analytic_one_shot=analytic,
        budget=budget,
    )
