"""Latent trajectory planning, feasibility geometry, and toy flow matching."""

__version__ = "0.1.0"

from .core import (
    DiagonalGaussian,
    SeededStream,
    derive_stream,
    floor_std,
    gaussian_blend,
    gaussian_fit,
    gaussian_sample,
)
from .planner import PlannerConfig, PlanResult, PlannerState, iterate, plan, select_elites
from .valuation import (
    ReturnSpec,
    RewardWeights,
    dense_reward,
    discounted_return,
    evaluate_value,
    exploration_score,
    make_analytic_evaluator,
    snr,
    ssim,
)
from .worldgen import (
    AffineManifoldSpec,
    PointMassWorld,
    Trajectory,
    TrajectorySpace,
    decode_affine,
    decode_knots,
    extract_action_chunk,
    is_feasible,
    manifold_distance,
    render,
    rollout,
)

__all__ = [
    "AffineManifoldSpec",
    "DiagonalGaussian",
    "PlanResult",
    "PlannerConfig",
    "PlannerState",
    "PointMassWorld",
    "ReturnSpec",
    "RewardWeights",
    "SeededStream",
    "Trajectory",
    "TrajectorySpace",
    "decode_affine",
    "decode_knots",
    "dense_reward",
    "derive_stream",
    "discounted_return",
    "evaluate_value",
    "exploration_score",
    "extract_action_chunk",
    "floor_std",
    "gaussian_blend",
    "gaussian_fit",
    "gaussian_sample",
    "is_feasible",
    "iterate",
    "make_analytic_evaluator",
    "manifold_distance",
    "plan",
    "render",
    "rollout",
    "select_elites",
    "snr",
    "ssim",
    "__version__",
]
