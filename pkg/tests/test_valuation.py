import numpy as np
import pytest

from latentplan.core import SeededStream
from latentplan.valuation import (
    DEFAULT_VALUE_LEN,
    ReturnSpec,
    RewardWeights,
    dense_reward,
    discounted_return,
    evaluate_value,
    exploration_score,
    frame_mse,
    make_analytic_evaluator,
    snr,
    ssim,
    step_rewards,
    trajectory_terms,
)
from latentplan.worldgen import PointMassWorld, decode_knots, render

SSIM_C1 = 1e-4


def test_ssim_identical_frames():
    x = np.random.default_rng(0).uniform(size=(16, 16))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_ssim_zeros_vs_ones():
    a = np.zeros((8, 8))
    b = np.ones((8, 8))
    assert ssim(a, b) == pytest.approx(SSIM_C1 / (1.0 + SSIM_C1), abs=1e-12)


def test_ssim_symmetry():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(size=(2, 12, 12))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)


def test_ssim_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        ssim(np.zeros((4, 4)), np.zeros((5, 5)))


def goal_setup():
    world = PointMassWorld()
    s_T = world.goal_state()
    frame_T = render(world, s_T)
    return world, s_T, frame_T


def test_dense_reward_perfect_match_totals_half():
    _, s_T, frame_T = goal_setup()
    br = dense_reward(frame_T, frame_T, s_T, s_T, s_T, s_T, np.zeros(2), np.zeros(2), np.zeros(2))
    assert br.c1 == 1.0 and br.c2 == pytest.approx(1.0, abs=1e-12)
    assert br.c5 == 1.0
    assert br.c6 == br.c7 == br.c8 == br.c9 == 0.0
    assert br.total == pytest.approx(0.5, abs=1e-12)


def test_dense_reward_zero_motion_penalties():
    world, s_T, frame_T = goal_setup()
    s = np.array([0.2, 0.3, 0.0, 0.0])
    frame = render(world, s)
    a = np.array([0.4, -0.2])
    br = dense_reward(frame, frame_T, s, s_T, s, s, a, a, a)
    assert br.c6 == br.c7 == br.c8 == br.c9 == 0.0


def test_dense_reward_velocity_penalty_value():
    _, s_T, frame_T = goal_setup()
    s_prev = np.array([0.1, 0.1, 0.0, 0.0])
    s_t = s_prev + np.array([1.0, 2.0, 0.0, 0.0])
    # s_t is outside the workspace box on purpose; the term only needs vectors.
    br = dense_reward(
        frame_T, frame_T, s_t, s_T, s_prev, s_prev, np.zeros(2), np.zeros(2), np.zeros(2)
    )
    assert br.c6 == pytest.approx(3.0, abs=1e-12)
    # Two state components in the bimanual accounting -> effective weight -2/16.
    assert RewardWeights().effective()["c6"] * br.c6 == pytest.approx(-6.0 / 16.0)


def test_dense_reward_total_matches_effective_weights():
    world, s_T, frame_T = goal_setup()
    rng = np.random.default_rng(2)
    s = np.array([0.3, 0.7, 0.1, -0.2])
    frame = render(world, s)
    args = [rng.normal(size=4) for _ in range(2)] + [rng.normal(size=2) for _ in range(3)]
    br = dense_reward(frame, frame_T, s, s_T, args[0], args[1], args[2], args[3], args[4])
    eff = RewardWeights().effective()
    total = sum(eff[k] * v for k, v in br.terms().items())
    assert br.total == pytest.approx(total, abs=1e-15)


def test_discounted_return_hand_values():
    assert discounted_return([1.0, 1.0, 1.0], ReturnSpec(0.5, 3)) == pytest.approx(1.75)
    assert discounted_return([2.0, 3.0], ReturnSpec(1.0, 2)) == pytest.approx(5.0)
    assert discounted_return([1.0, 0.0, 0.0], ReturnSpec(0.37, 3)) == pytest.approx(1.0)
    assert discounted_return([4.0, 9.0], ReturnSpec(0.0, 2)) == pytest.approx(4.0)


def test_discounted_return_is_linear():
    rng = np.random.default_rng(3)
    spec = ReturnSpec(0.9, 5)
    a, b = rng.normal(size=(2, 5))
    lhs = discounted_return(2.0 * a + 3.0 * b, spec)
    rhs = 2.0 * discounted_return(a, spec) + 3.0 * discounted_return(b, spec)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_discounted_return_length_check():
    with pytest.raises(ValueError):
        discounted_return([1.0, 2.0], ReturnSpec(0.9, 3))


def sample_traj(world=None):
    world = world or PointMassWorld()
    z = SeededStream(7).derive("traj").normal(world.latent_dim)
    return decode_knots(z, world), world


def test_evaluate_value_noiseless_matches_return():
    traj, world = sample_traj()
    spec = ReturnSpec(0.99, traj.horizon)
    values = evaluate_value(traj, np.zeros(8), world, spec, noise_scale=0.0)
    expected = discounted_return(step_rewards(traj, world), spec)
    np.testing.assert_allclose(values, np.full(8, expected), atol=1e-12)
    # Zero latent behaves exactly like noise_scale 0.
    noisy_zero = evaluate_value(traj, np.zeros(8), world, spec, noise_scale=0.1)
    np.testing.assert_allclose(noisy_zero, np.full(8, expected), atol=1e-12)


def test_evaluate_value_additive_noise():
    traj, world = sample_traj()
    spec = ReturnSpec(0.99, traj.horizon)
    base = evaluate_value(traj, np.zeros(8), world, spec)
    shifted = evaluate_value(traj, np.ones(8), world, spec, noise_scale=0.1)
    np.testing.assert_allclose(shifted, base + 0.1, atol=1e-12)


def test_evaluate_value_single_segment_equals_discounted_return():
    traj, world = sample_traj()
    spec = ReturnSpec(0.97, traj.horizon)
    value = evaluate_value(traj, np.zeros(1), world, spec, value_len=1)
    rewards = step_rewards(traj, world)
    assert value[0] == pytest.approx(discounted_return(rewards, spec), abs=1e-12)


def test_evaluate_value_rejects_short_latent():
    traj, world = sample_traj()
    with pytest.raises(ValueError):
        evaluate_value(traj, np.zeros(4), world, value_len=8)


def test_trajectory_terms_match_dense_reward():
    traj, world = sample_traj()
    terms = trajectory_terms(traj, world)
    goal_img = render(world, world.goal_state())
    s = traj.states
    a = traj.actions
    for t in [0, 1, traj.horizon - 1]:
        prev = s[max(t - 1, 0)]
        prev2 = s[max(t - 2, 0)]
        ap = a[max(t - 1, 0)]
        ap2 = a[max(t - 2, 0)]
        br = dense_reward(
            traj.frames[t], goal_img, s[t], world.goal_state(), prev, prev2, a[t], ap, ap2
        )
        assert terms["total"][t] == pytest.approx(br.total, abs=1e-12)
        assert terms["c2"][t] == pytest.approx(br.c2, abs=1e-12)


def test_step_rewards_subtract_obstacle_penalty():
    world = PointMassWorld(start=(0.5, 0.35, 0.0, 0.0))  # just outside the obstacle
    traj = decode_knots(np.zeros(world.latent_dim), world)
    with_pen = step_rewards(traj, world, obstacle_weight=8.0)
    without = step_rewards(traj, world, obstacle_weight=0.0)
    np.testing.assert_allclose(with_pen, without, atol=1e-12)  # no contact here
    crossing = PointMassWorld(
        start=(0.15, 1.0, 0.0, 0.0), goal=(1.85, 1.0), obstacles=((1.0, 1.0, 0.2),)
    )
    from latentplan.worldgen import rollout

    acts = np.tile([1.0, 0.0], (crossing.horizon, 1))  # drives through the obstacle
    traj2 = rollout(acts, crossing)
    penalized = step_rewards(traj2, crossing, obstacle_weight=8.0)
    free = step_rewards(traj2, crossing, obstacle_weight=0.0)
    assert np.any(penalized < free) and np.all(penalized <= free + 1e-12)


def test_snr_hand_values():
    assert snr(np.array([1.0, 3.0]), 0.0) == pytest.approx(2.0)
    assert snr(np.array([-1.0, 1.0]), 0.123) == 0.0
    assert snr(np.array([2.0, 2.0, 2.0]), 1e-8) == pytest.approx(2.0e8)


def test_snr_scale_invariance_at_zero_eps():
    rng = np.random.default_rng(4)
    for _ in range(100):
        v = rng.normal(size=6) + 2.0
        c = rng.uniform(0.1, 10.0)
        assert snr(c * v, 0.0) == pytest.approx(snr(v, 0.0), rel=1e-9)


def test_snr_validation():
    with pytest.raises(ValueError):
        snr(np.array([1.0]))
    with pytest.raises(ValueError):
        snr(np.array([1.0, 2.0]), eps=-1.0)


def test_exploration_score():
    assert exploration_score([0.5, 2.0, 1.0]) == 2.0
    assert exploration_score([3.25]) == 3.25
    assert exploration_score([1.5, 1.5, 1.5]) == 1.5
    with pytest.raises(ValueError):
        exploration_score([])


def test_reward_bounds():
    traj, world = sample_traj()
    terms = trajectory_terms(traj, world)
    for key in ("c1", "c2", "c5"):
        assert np.all(terms[key] > 0.0) and np.all(terms[key] <= 1.0)
    for key in ("c6", "c7", "c8", "c9"):
        assert np.all(terms[key] >= 0.0)


def test_batch_evaluator_matches_singles():
    traj, world = sample_traj()
    evaluator = make_analytic_evaluator(world, gamma=0.99, noise_scale=0.05)
    Z = SeededStream(9).derive("vals").normal((4, DEFAULT_VALUE_LEN))
    batch = evaluator(traj, Z)
    spec = ReturnSpec(0.99, traj.horizon)
    for n in range(4):
        single = evaluate_value(traj, Z[n], world, spec, noise_scale=0.05)
        np.testing.assert_allclose(batch[n], single, atol=1e-12)
