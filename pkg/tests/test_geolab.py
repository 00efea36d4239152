import numpy as np
import pytest

from latentplan.core import SeededStream
from latentplan.geolab import (
    PlantedLandscape,
    clopper_pearson,
    decay_curve,
    estimate_feasible_mass,
    estimate_latent_mass,
    fit_log_decay,
    one_shot_vs_iterative,
    segment_family,
    stadium_volume,
    unit_ball_volume,
)
from latentplan.planner import PlannerConfig
from latentplan.worldgen import AffineManifoldSpec, TrajectorySpace


def stadium_setup(extra_dims=0, eps=0.1, y_halfwidth=0.5):
    """Unit-length segment at mid-height of a roomy box; the epsilon-tube is
    strictly inside, so its closed-form volume is exact."""
    D = 2 + extra_dims
    basis = np.zeros((D, 1))
    basis[0, 0] = 1.0
    offset = np.full(D, 0.5)
    offset[0] = 0.0
    bounds = np.empty((D, 2))
    bounds[0] = (-0.2, 1.2)
    bounds[1:] = (0.5 - y_halfwidth, 0.5 + y_halfwidth)
    spec = AffineManifoldSpec(basis=basis, offset=offset, epsilon=eps)
    space = TrajectorySpace(horizon=1, dim_state=1, dim_action=D - 1, bounds=bounds)
    return spec, space


def test_clopper_pearson_edges():
    low, high = clopper_pearson(0, 100)
    assert low == 0.0 and 0.0 < high < 0.05
    low, high = clopper_pearson(100, 100)
    assert high == 1.0 and low > 0.95
    low, high = clopper_pearson(50, 100)
    assert low < 0.5 < high
    with pytest.raises(ValueError):
        clopper_pearson(5, 0)


def test_unit_ball_volumes():
    assert unit_ball_volume(0) == pytest.approx(1.0)
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(np.pi)
    assert unit_ball_volume(3) == pytest.approx(4.0 * np.pi / 3.0)


def test_stadium_volume_hand_values():
    # D = 2: rectangle plus two half-disks; D = 3: cylinder plus ball.
    assert stadium_volume(2, 0.1) == pytest.approx(0.2 + np.pi * 0.01)
    assert stadium_volume(3, 0.1) == pytest.approx(np.pi * 0.01 + (4.0 / 3.0) * np.pi * 1e-3)


def test_feasible_mass_covers_stadium_area_2d():
    spec, space = stadium_setup()
    est = estimate_feasible_mass(spec, space, 1_000_000, SeededStream(101).derive("2d"))
    true_ratio = stadium_volume(2, 0.1) / space.volume
    assert est.covers(true_ratio)
    assert abs(est.ratio - true_ratio) < 2e-3


def test_feasible_mass_covers_tube_volume_3d():
    spec, space = stadium_setup(extra_dims=1)
    est = estimate_feasible_mass(spec, space, 1_000_000, SeededStream(102).derive("3d"))
    true_ratio = stadium_volume(3, 0.1) / space.volume
    assert est.covers(true_ratio)


def test_feasible_mass_saturates_at_large_epsilon():
    spec, space = stadium_setup(eps=5.0)
    est = estimate_feasible_mass(spec, space, 10_000, SeededStream(103))
    assert est.ratio == 1.0 and est.ci_high == 1.0


def test_feasible_mass_monotone_in_epsilon():
    _, space = stadium_setup()
    stream = SeededStream(104).derive("mono")
    last = -1.0
    for eps in (0.02, 0.05, 0.1, 0.2):
        spec, _ = stadium_setup(eps=eps)
        est = estimate_feasible_mass(spec, space, 20_000, stream)
        assert est.ratio >= last
        last = est.ratio


def test_ci_width_shrinks_like_root_n():
    spec, space = stadium_setup(y_halfwidth=0.15)  # ratio ~ 0.64, well inside (0, 1)
    small = estimate_feasible_mass(spec, space, 10_000, SeededStream(105).derive("w"))
    large = estimate_feasible_mass(spec, space, 40_000, SeededStream(105).derive("w4"))
    ratio = (large.ci_high - large.ci_low) / (small.ci_high - small.ci_low)
    assert 0.4 <= ratio <= 0.6


def test_latent_mass_delta_zero_and_one():
    spec, _ = segment_family(2, delta=0.0)
    est = estimate_latent_mass(spec, 5_000, SeededStream(106))
    assert est.ratio == 1.0
    spec1, _ = segment_family(2, delta=1.0)
    est1 = estimate_latent_mass(spec1, 5_000, SeededStream(107))
    assert est1.ratio == 0.0


def test_latent_mass_covers_planted_delta():
    spec, _ = segment_family(2, delta=0.1)
    est = estimate_latent_mass(spec, 20_000, SeededStream(108).derive("d"))
    assert est.covers(0.9)


def test_fit_log_decay_exact_line():
    H = np.array([1.0, 2.0, 4.0, 8.0])
    slope, r2 = fit_log_decay(H, -0.5 * H)
    assert slope == pytest.approx(-0.5, abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_decay_curve_fits_negative_slope():
    curve = decay_curve(
        [1, 2, 4],
        lambda H: segment_family(H, epsilon=0.05),
        50_000,
        SeededStream(109).derive("curve"),
        n_latent=2_000,
    )
    assert curve.slope < 0.0
    assert curve.r_squared > 0.9
    assert all(p.included_in_fit for p in curve.points)
    assert all(p.latent is not None for p in curve.points)


def test_decay_curve_excludes_zero_hit_points():
    curve = decay_curve(
        [1, 2, 4, 8],
        lambda H: segment_family(H, epsilon=0.05),
        2_000,
        SeededStream(110).derive("sparse"),
    )
    assert not curve.points[3].included_in_fit
    assert curve.points[3].log_ratio == -np.inf
    assert curve.slope < 0.0


def test_decay_curve_needs_three_horizons():
    with pytest.raises(ValueError):
        decay_curve([1, 2], lambda H: segment_family(H), 1000, SeededStream(0))


def test_landscape_threshold_mass():
    land = PlantedLandscape(prior_mass=0.01)
    z = SeededStream(111).derive("mass").normal((200_000, land.latent_dim))
    rate = land.hits(z).mean()
    assert rate == pytest.approx(0.01, abs=0.002)
    with pytest.raises(ValueError):
        PlantedLandscape(prior_mass=0.0)


def test_one_shot_matches_analytic_small():
    land = PlantedLandscape(latent_dim=4, prior_mass=0.05)
    config = PlannerConfig(
        K=2, M=10, N=1, K1=3, K2=5, d_vid=4, d_val=4,
        alpha=0.8, beta=0.3, sigma_decay=1.0,
    )
    result = one_shot_vs_iterative(land, 20, config, 300, SeededStream(112).derive("cmp"))
    assert abs(result.one_shot.hit_rate - result.analytic_one_shot) < 0.08
    assert result.iterative.hit_rate >= result.one_shot.hit_rate


def test_one_shot_saturates_at_full_mass():
    land = PlantedLandscape(latent_dim=4, prior_mass=1.0)
    config = PlannerConfig(K=1, M=4, N=1, K1=2, K2=2, d_vid=4, d_val=4)
    result = one_shot_vs_iterative(land, 4, config, 50, SeededStream(113))
    assert result.one_shot.hit_rate == 1.0
    assert result.iterative.hit_rate == 1.0


def test_budget_parity_enforced():
    land = PlantedLandscape(latent_dim=4)
    config = PlannerConfig(K=2, M=10, N=1, K1=3, K2=5, d_vid=4, d_val=4)
    with pytest.raises(ValueError):
        one_shot_vs_iterative(land, 25, config, 10, SeededStream(0))
