import numpy as np
import pytest

from latentplan.core import SeededStream
from latentplan.flowmatch import (
    AdamState,
    FlowBatch,
    MlpField,
    euler_sample,
    flatten_params,
    fm_loss,
    gaussian_oracle_velocity,
    init_mlp_field,
    interpolate,
    load_field,
    make_flow_batch,
    save_field,
    train_step,
    with_params,
)


def small_field(seed=0, dim_cond=2, dim_x=2, hidden=8):
    return init_mlp_field(dim_cond, dim_x, hidden, SeededStream(seed).derive("init"))


def random_batch(seed=1, n=16, dim_cond=2, dim_x=2):
    stream = SeededStream(seed)
    x0 = stream.derive("x0").normal((n, dim_x))
    x1 = stream.derive("x1").normal((n, dim_x)) + 1.0
    cond = stream.derive("cond").normal((n, dim_cond))
    return make_flow_batch(x0, x1, cond, stream.derive("t"))


def test_interpolate_endpoints():
    x0 = np.array([1.0, -1.0])
    x1 = np.array([3.0, 5.0])
    xt, v = interpolate(x0, x1, 0.0)
    np.testing.assert_array_equal(xt, x0)
    np.testing.assert_array_equal(v, x1 - x0)
    xt, _ = interpolate(x0, x1, 1.0)
    np.testing.assert_array_equal(xt, x1)


def test_interpolate_midpoint():
    xt, v = interpolate(np.zeros(2), np.array([2.0, 4.0]), 0.5)
    np.testing.assert_array_equal(xt, [1.0, 2.0])
    np.testing.assert_array_equal(v, [2.0, 4.0])
    with pytest.raises(ValueError):
        interpolate(np.zeros(2), np.zeros(2), 1.5)


def test_fm_loss_perfect_field_is_zero():
    batch = random_batch()
    targets = batch.x1 - batch.x0

    def oracle(t, cond, x):
        return targets

    assert fm_loss(oracle, batch) == pytest.approx(0.0, abs=1e-15)


def test_fm_loss_zero_field_hand_value():
    batch = FlowBatch(
        x0=np.zeros((1, 2)), x1=np.ones((1, 2)), cond=np.zeros((1, 0)), t=np.array([0.3])
    )

    def zero(t, cond, x):
        return np.zeros_like(np.atleast_2d(x))

    assert fm_loss(zero, batch) == pytest.approx(2.0, abs=1e-15)


def test_fm_loss_nonnegative():
    field = small_field()
    for seed in range(5):
        assert fm_loss(field, random_batch(seed)) >= 0.0


def test_gradients_match_finite_differences():
    # Central differences with h = 1e-5 across random fields, batches, and
    # parameter coordinates.
    rng = np.random.default_rng(42)
    h = 1e-5
    worst = 0.0
    for case in range(10):
        field = small_field(seed=case)
        batch = random_batch(seed=100 + case, n=8)
        from latentplan.flowmatch import _loss_and_grads

        _, grads = _loss_and_grads(field, batch)
        flat_grad = np.concatenate([g.ravel() for g in grads])
        flat = flatten_params(field)
        for idx in rng.choice(flat.size, size=10, replace=False):
            bumped = flat.copy()
            bumped[idx] += h
            up = fm_loss(with_params(field, bumped), batch)
            bumped[idx] -= 2 * h
            down = fm_loss(with_params(field, bumped), batch)
            fd = (up - down) / (2 * h)
            rel = abs(flat_grad[idx] - fd) / (max(abs(flat_grad[idx]), abs(fd)) + 1e-6)
            worst = max(worst, rel)
    assert worst <= 1e-4


def test_training_loss_decreases_over_windows():
    field = small_field(seed=3, dim_cond=0, dim_x=1)
    stream = SeededStream(11)
    x0 = stream.derive("x0").normal((64, 1))
    x1 = stream.derive("x1").normal((64, 1)) * 0.5 + 1.0
    batch = make_flow_batch(x0, x1, np.zeros((64, 0)), stream.derive("t"))
    state = None
    losses = []
    for _ in range(500):
        field, state, loss = train_step(field, batch, 1e-2, state)
        losses.append(loss)
    for i in range(0, 400, 50):
        assert losses[i + 100] < losses[i]


def test_vanishing_learning_rate_leaves_params():
    field = small_field()
    batch = random_batch()
    updated, _, _ = train_step(field, batch, 1e-300)
    assert np.max(np.abs(flatten_params(updated) - flatten_params(field))) < 1e-12
    with pytest.raises(ValueError):
        train_step(field, batch, 0.0)


def test_euler_constant_field():
    c = np.array([0.5, -2.0])

    def const(t, cond, x):
        return np.broadcast_to(c, np.shape(x))

    for steps in (1, 7, 100):
        out = euler_sample(const, np.array([1.0, 1.0]), None, steps)
        np.testing.assert_allclose(out, [1.5, -1.0], atol=1e-12)


def test_euler_zero_field_identity():
    def zero(t, cond, x):
        return np.zeros_like(x)

    z0 = np.array([3.0, -4.0])
    np.testing.assert_array_equal(euler_sample(zero, z0, None, 13), z0)


def test_euler_point_mass_oracle_hits_target():
    m = 2.5

    def oracle(t, cond, x):
        return (m - x) / (1.0 - t)

    out = euler_sample(oracle, np.array([-1.0]), None, 100)
    assert abs(out[0] - m) <= 1e-3


def test_euler_rejects_nonfinite():
    def blowup(t, cond, x):
        with np.errstate(over="ignore"):
            return x * 1e200

    with pytest.raises(FloatingPointError):
        euler_sample(blowup, np.array([1.0]), None, 10)


def test_oracle_velocity_standard_pair_at_half():
    for x in (-2.0, 0.0, 1.7):
        v = gaussian_oracle_velocity(0.5, x, (0.0, 1.0), (0.0, 1.0))
        assert v == pytest.approx(0.0, abs=1e-15)


def test_oracle_velocity_point_mass_target():
    m = 1.5
    for t in (0.0, 0.3, 0.9):
        for x in (-1.0, 0.4):
            v = gaussian_oracle_velocity(t, x, (0.0, 1.0), (m, 0.0))
            assert v == pytest.approx((m - x) / (1.0 - t), rel=1e-12)


def test_oracle_velocity_coefficient_at_zero():
    # base = target = standard normal: v(0, x) = -x.
    for x in (-3.0, 0.5, 2.0):
        assert gaussian_oracle_velocity(0.0, x, (0.0, 1.0), (0.0, 1.0)) == pytest.approx(-x)


def test_oracle_velocity_degenerate_conditioning():
    with pytest.raises(ValueError):
        gaussian_oracle_velocity(1.0, 0.0, (0.0, 1.0), (2.0, 0.0))
    with pytest.raises(ValueError):
        gaussian_oracle_velocity(0.5, 0.0, (0.0, 0.0), (2.0, 1.0))


def test_euler_converges_linearly_on_gaussian_oracle():
    # Exact endpoint map: x(1) = mu1 + (s1 / s0) * (x0 - mu0).
    base, target = (0.0, 1.0), (1.0, 0.6)

    def field(t, cond, x):
        return gaussian_oracle_velocity(t, x, base, target)

    x0 = np.array([1.3])
    exact = target[0] + (target[1] / base[1]) * (x0[0] - base[0])
    errors = []
    for steps in (10, 20, 40, 80):
        out = euler_sample(field, x0, None, steps)
        errors.append(abs(out[0] - exact))
    ratios = [errors[i] / errors[i + 1] for i in range(3)]
    assert all(1.5 < r < 2.5 for r in ratios)  # halving h halves the error


def test_oracle_field_minimizes_fm_loss():
    base, target = (0.0, 1.0), (1.0, 0.6)
    stream = SeededStream(21)
    n = 4096
    x0 = stream.derive("x0").normal((n, 1)) * base[1] + base[0]
    x1 = stream.derive("x1").normal((n, 1)) * target[1] + target[0]
    batch = make_flow_batch(x0, x1, np.zeros((n, 0)), stream.derive("t"))

    def oracle(t, cond, x):
        t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
        return np.concatenate(
            [gaussian_oracle_velocity(float(ti), xi, base, target).reshape(1, -1)
             for ti, xi in zip(t[:, 0], np.atleast_2d(x))]
        )

    oracle_loss = fm_loss(oracle, batch)
    rng = np.random.default_rng(5)
    for _ in range(5):
        a, b = rng.normal(size=2)

        def rival(t, cond, x, a=a, b=b):
            return a + b * np.atleast_2d(x)

        assert fm_loss(rival, batch) > oracle_loss


def test_save_load_round_trip(tmp_path):
    field = small_field(seed=9)
    save_field(field, tmp_path / "field", meta={"stage": "vid", "lr": 1e-3})
    loaded = load_field(tmp_path / "field")
    np.testing.assert_array_equal(flatten_params(loaded), flatten_params(field))
    assert loaded.dim_cond == field.dim_cond
    batch = random_batch()
    assert fm_loss(loaded, batch) == pytest.approx(fm_loss(field, batch), abs=0)


def test_adam_state_threads():
    field = small_field()
    batch = random_batch()
    f1, s1, _ = train_step(field, batch, 1e-3)
    assert isinstance(s1, AdamState) and s1.step == 1
    _, s2, _ = train_step(f1, batch, 1e-3, s1)
    assert s2.step == 2
