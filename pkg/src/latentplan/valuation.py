"""Dense rewards, discounted returns, value evaluation, and SNR scoring.

The reward is a desk-scale instantiation of a nine-term dense reward whose
weights are bookkept over 16 scalar components, the layout of a two-arm
robot with two wrist views and one top view. Here a single rendered view
plays every image role and a single state/action stream plays both arms,
with component counts preserved: the image terms count three components
each and the state/action terms two each, so a perfect goal match with no
motion scores exactly 0.5.

Obstacle contact is not part of the nine-term table; it enters the per-step
planning reward as a separate penalty proportional to penetration depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .worldgen import PointMassWorld, Trajectory, obstacle_penetration, render

# Scalar components per term in the two-arm accounting: wrist terms and
# per-arm terms count twice, top-view terms once. Sums to 16.
_MULTIPLICITY = {
    "c1": 2, "c2": 2, "c3": 1, "c4": 1,
    "c5": 2, "c6": 2, "c7": 2, "c8": 2, "c9": 2,
}

SSIM_C1 = (0.01 * 1.0) ** 2
SSIM_C2 = (0.03 * 1.0) ** 2

DEFAULT_OBSTACLE_WEIGHT = 25.0
DEFAULT_NOISE_SCALE = 0.0
DEFAULT_VALUE_LEN = 8


@dataclass(frozen=True)
class RewardWeights:
    """Per-component weights over the 16-component two-arm accounting."""

    w_img_mse: float = 1.0 / 16.0
    w_img_ssim: float = 1.0 / 16.0
    w_state_prox: float = 1.0 / 16.0
    w_vel: float = -1.0 / 16.0
    w_acc: float = -1.0 / 16.0
    w_act_vel: float = -0.1 / 16.0
    w_act_acc: float = -0.1 / 16.0

    def effective(self) -> dict[str, float]:
        """Component-count-folded weight per term c1..c9."""
        per_term = {
            "c1": self.w_img_mse, "c2": self.w_img_ssim,
            "c3": self.w_img_mse, "c4": self.w_img_ssim,
            "c5": self.w_state_prox, "c6": self.w_vel, "c7": self.w_acc,
            "c8": self.w_act_vel, "c9": self.w_act_acc,
        }
        return {k: _MULTIPLICITY[k] * w for k, w in per_term.items()}


@dataclass(frozen=True)
class RewardBreakdown:
    """Raw term values c1..c9 plus their weighted total."""

    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    c7: float
    c8: float
    c9: float
    total: float

    def terms(self) -> dict[str, float]:
        return {f"c{i}": getattr(self, f"c{i}") for i in range(1, 10)}


@dataclass(frozen=True)
class ReturnSpec:
    gamma: float = 0.99
    horizon: int = 32

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Global single-window SSIM with dynamic range 1.0.

    Uses population moments over the whole frame; symmetric in its
    arguments and exactly 1 for identical frames.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("frames must have identical shape")
    mu_a, mu_b = a.mean(), b.mean()
    var_a = a.var()
    var_b = b.var()
    cov = ((a - mu_a) * (b - mu_b)).mean()
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(num / den)


def frame_mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("frames must have identical shape")
    return float(np.mean((a - b) ** 2))


def dense_reward(
    frame_t: np.ndarray,
    frame_T: np.ndarray,
    s_t: np.ndarray,
    s_T: np.ndarray,
    s_prev: np.ndarray,
    s_prev2: np.ndarray,
    a_t: np.ndarray,
    a_prev: np.ndarray,
    a_prev2: np.ndarray,
    weights: RewardWeights | None = None,
) -> RewardBreakdown:
    """Evaluate every dense reward term for one step.

    frame_T and s_T are the goal frame and goal state; the difference terms
    use the supplied one- and two-step histories.
    """
    weights = weights or RewardWeights()
    s_t, s_T, s_prev, s_prev2 = (np.asarray(v, dtype=np.float64) for v in (s_t, s_T, s_prev, s_prev2))
    a_t, a_prev, a_prev2 = (np.asarray(v, dtype=np.float64) for v in (a_t, a_prev, a_prev2))
    if not (s_t.shape == s_T.shape == s_prev.shape == s_prev2.shape):
        raise ValueError("state vectors must share one dimension")
    if not (a_t.shape == a_prev.shape == a_prev2.shape):
        raise ValueError("action vectors must share one dimension")
    c1 = float(np.exp(-0.01 * frame_mse(frame_t, frame_T)))
    c2 = float(np.exp(ssim(frame_t, frame_T) - 1.0))
    c5 = float(np.exp(-np.linalg.norm(s_t - s_T)))
    c6 = float(np.sum(np.abs(s_t - s_prev)))
    c7 = float(np.sum(np.abs(s_t - 2.0 * s_prev + s_prev2)))
    c8 = float(np.sum(np.abs(a_t - a_prev)))
    c9 = float(np.sum(np.abs(a_t - 2.0 * a_prev + a_prev2)))
    values = {"c1": c1, "c2": c2, "c3": c1, "c4": c2,
              "c5": c5, "c6": c6, "c7": c7, "c8": c8, "c9": c9}
    eff = weights.effective()
    total = sum(eff[k] * values[k] for k in values)
    return RewardBreakdown(total=total, **values)


def discounted_return(rewards: np.ndarray, spec: ReturnSpec) -> float:
    """Sum of gamma**i * r_i, i from 0; gamma = 0 keeps only r_0."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.shape != (spec.horizon,):
        raise ValueError(f"reward sequence must have length {spec.horizon}")
    discounts = np.power(spec.gamma, np.arange(spec.horizon, dtype=np.float64))
    return float(np.dot(discounts, r))


def trajectory_terms(
    traj: Trajectory, world: PointMassWorld, weights: RewardWeights | None = None
) -> dict[str, np.ndarray]:
    """Vectorized per-step term values for a whole trajectory.

    Returns arrays of shape (H,) for c1..c9, the weighted `total`, and the
    obstacle penetration depth `pen`. Histories are clamped at the start of
    the trajectory (steps 0 and 1 reuse the earliest state/action), so the
    difference penalties open at zero.
    """
    weights = weights or RewardWeights()
    if traj.frames is None:
        raise ValueError("trajectory must carry rendered frames")
    H = traj.horizon
    goal_state = world.goal_state()
    goal_img = render(world, goal_state)
    frames = traj.frames
    mse = np.mean((frames - goal_img) ** 2, axis=(1, 2))
    mu_t = frames.mean(axis=(1, 2))
    var_t = frames.var(axis=(1, 2))
    mu_g = goal_img.mean()
    var_g = goal_img.var()
    cov = (frames * goal_img).mean(axis=(1, 2)) - mu_t * mu_g
    ssim_t = ((2.0 * mu_t * mu_g + SSIM_C1) * (2.0 * cov + SSIM_C2)) / (
        (mu_t**2 + mu_g**2 + SSIM_C1) * (var_t + var_g + SSIM_C2)
    )
    c1 = np.exp(-0.01 * mse)
    c2 = np.exp(ssim_t - 1.0)
    states = traj.states
    actions = traj.actions
    prev = np.vstack([states[:1], states[:-1]])
    prev2 = np.vstack([states[:1], prev[:-1]])
    a_prev = np.vstack([actions[:1], actions[:-1]])
    a_prev2 = np.vstack([actions[:1], a_prev[:-1]])
    c5 = np.exp(-np.linalg.norm(states - goal_state, axis=1))
    c6 = np.sum(np.abs(states - prev), axis=1)
    c7 = np.sum(np.abs(states - 2.0 * prev + prev2), axis=1)
    c8 = np.sum(np.abs(actions - a_prev), axis=1)
    c9 = np.sum(np.abs(actions - 2.0 * a_prev + a_prev2), axis=1)
    terms = {"c1": c1, "c2": c2, "c3": c1, "c4": c2,
             "c5": c5, "c6": c6, "c7": c7, "c8": c8, "c9": c9}
    eff = weights.effective()
    total = np.zeros(H)
    for key, vals in terms.items():
        total = total + eff[key] * vals
    terms["total"] = total
    terms["pen"] = obstacle_penetration(world, states[:, :2])
    return terms


def step_rewards(
    traj: Trajectory,
    world: PointMassWorld,
    weights: RewardWeights | None = None,
    obstacle_weight: float = DEFAULT_OBSTACLE_WEIGHT,
) -> np.ndarray:
    """Per-step planning reward: weighted dense total minus obstacle penalty."""
    terms = trajectory_terms(traj, world, weights)
    return terms["total"] - obstacle_weight * terms["pen"]


def evaluate_value(
    traj: Trajectory,
    z_val: np.ndarray,
    world: PointMassWorld,
    spec: ReturnSpec | None = None,
    noise_scale: float = 0.0,
    value_len: int = DEFAULT_VALUE_LEN,
    weights: RewardWeights | None = None,
    obstacle_weight: float = DEFAULT_OBSTACLE_WEIGHT,
) -> np.ndarray:
    """Analytic stochastic value estimate for one (trajectory, latent) pair.

    Computes per-step dense rewards along the trajectory and their
    discounted return, then emits `value_len` noisy estimates of that
    return, perturbed componentwise by noise_scale times the leading
    components of z_val. The spread of the vector therefore reflects
    value-estimation noise (the latent draw), not trajectory structure, so
    the SNR score de-rates unreliable estimates without punishing
    trajectories that make progress. Deterministic in its inputs;
    noise_scale 0 (or a zero latent) recovers the exact analytic return in
    every component.
    """
    spec = spec or ReturnSpec(horizon=traj.horizon)
    z = np.asarray(z_val, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] < value_len:
        raise ValueError(f"value latent must have dimension >= {value_len}")
    rewards = step_rewards(traj, world, weights, obstacle_weight)
    ret = discounted_return(rewards, ReturnSpec(spec.gamma, traj.horizon))
    return ret + noise_scale * z[:value_len]


def snr(sample: np.ndarray, eps: float = 1e-6) -> float:
    """Mean of the value estimates over their population std plus eps."""
    v = np.asarray(sample, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 2:
        raise ValueError("SNR needs at least two value estimates")
    if eps < 0.0:
        raise ValueError("eps must be non-negative")
    return float(v.mean() / (v.std(ddof=0) + eps))


def exploration_score(snr_row: np.ndarray) -> float:
    """Most reliable evaluation in a row of SNR scores: the maximum."""
    row = np.asarray(snr_row, dtype=np.float64)
    if row.size == 0:
        raise ValueError("cannot score an empty row")
    return float(row.max())


def make_analytic_evaluator(
    world: PointMassWorld,
    gamma: float = 0.99,
    noise_scale: float = DEFAULT_NOISE_SCALE,
    value_len: int = DEFAULT_VALUE_LEN,
    weights: RewardWeights | None = None,
    obstacle_weight: float = DEFAULT_OBSTACLE_WEIGHT,
):
    """Batch evaluator for the planner: (trajectory, (N, d_val) latents) ->
    (N, value_len) value samples, computing the analytic segment values once."""

    def evaluator(traj: Trajectory, z_vals: np.ndarray) -> np.ndarray:
        rewards = step_rewards(traj, world, weights, obstacle_weight)
        ret = discounted_return(rewards, ReturnSpec(gamma, traj.horizon))
        Z = np.atleast_2d(np.asarray(z_vals, dtype=np.float64))
        if Z.shape[1] < value_len:
            raise ValueError(f"value latent must have dimension >= {value_len}")
        return ret + noise_scale * Z[:, :value_len]

    return evaluator
