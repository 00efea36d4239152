"""Desk-scale flow matching with exact gradients.

Velocity fields are regressed toward the linear-path displacement target
x1 - x0 on interpolants x_t = (1 - t) x0 + t x1. The trainable field is a
two-hidden-layer tanh MLP over the concatenated input (t, condition, x_t),
small enough for finite-difference verification of its hand-written
backprop. Sampling integrates dx/dt = field(t, cond, x) with explicit Euler
from t = 0 to 1. For independent Gaussian endpoints the conditional
expectation E[x1 - x0 | x_t] is available in closed form and serves as the
ground-truth field in tests.

A field is any callable (t, cond, x) -> velocity where t may be a scalar or
a per-row vector and cond/x are (n, d) batches (or single vectors).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import SeededStream

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.95
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class MlpField:
    """Velocity field v(t, cond, x): concat input, two tanh layers, linear out."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    dim_cond: int
    dim_x: int

    @property
    def hidden(self) -> int:
        return self.b1.shape[0]

    @property
    def dim_in(self) -> int:
        return 1 + self.dim_cond + self.dim_x

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    def _stack_input(self, t, cond, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = x[None, :] if single else x
        n = X.shape[0]
        if self.dim_cond > 0:
            C = np.asarray(cond, dtype=np.float64)
            C = np.broadcast_to(C[None, :] if C.ndim == 1 else C, (n, self.dim_cond))
        else:
            C = np.zeros((n, 0))
        T = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1, 1), (n, 1))
        return np.concatenate([T, C, X], axis=1), single

    def __call__(self, t, cond, x) -> np.ndarray:
        a0, single = self._stack_input(t, cond, x)
        h1 = np.tanh(a0 @ self.w1.T + self.b1)
        h2 = np.tanh(h1 @ self.w2.T + self.b2)
        out = h2 @ self.w3.T + self.b3
        return out[0] if single else out


def init_mlp_field(
    dim_cond: int, dim_x: int, hidden: int, stream: SeededStream
) -> MlpField:
    """Glorot-normal weights, zero biases, drawn deterministically from `stream`."""
    if dim_x < 1 or dim_cond < 0 or hidden < 1:
        raise ValueError("invalid field dimensions")
    din = 1 + dim_cond + dim_x
    shapes = [(hidden, din), (hidden, hidden), (dim_x, hidden)]
    weights = []
    for i, (rows, cols) in enumerate(shapes):
        scale = np.sqrt(2.0 / (rows + cols))
        weights.append(stream.derive(f"w{i + 1}").normal((rows, cols)) * scale)
    return MlpField(
        w1=weights[0], b1=np.zeros(hidden),
        w2=weights[1], b2=np.zeros(hidden),
        w3=weights[2], b3=np.zeros(dim_x),
        dim_cond=dim_cond, dim_x=dim_x,
    )


@dataclass(frozen=True)
class FlowBatch:
    """Endpoint pairs with conditions and per-pair interpolation times."""

    x0: np.ndarray
    x1: np.ndarray
    cond: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        x0 = np.atleast_2d(np.asarray(self.x0, dtype=np.float64))
        x1 = np.atleast_2d(np.asarray(self.x1, dtype=np.float64))
        cond = np.asarray(self.cond, dtype=np.float64)
        if cond.ndim == 1:
            cond = cond.reshape(x0.shape[0], -1) if cond.size else cond.reshape(x0.shape[0], 0)
        t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        if x0.shape != x1.shape or x0.shape[0] == 0:
            raise ValueError("x0 and x1 must be equal-shape, non-empty batches")
        if cond.shape[0] != x0.shape[0] or t.shape[0] != x0.shape[0]:
            raise ValueError("cond and t must have one row per pair")
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise ValueError("times must lie in [0, 1]")
        for arr in (x0, x1, cond, t):
            arr.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "cond", cond)
        object.__setattr__(self, "t", t)

    @property
    def size(self) -> int:
        return self.x0.shape[0]


def make_flow_batch(
    x0: np.ndarray, x1: np.ndarray, cond: np.ndarray, stream: SeededStream
) -> FlowBatch:
    """Bundle endpoint pairs with uniform times drawn from `stream`."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    return FlowBatch(x0=x0, x1=x1, cond=cond, t=stream.uniform(x0.shape[0]))


def interpolate(x0: np.ndarray, x1: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Linear path point x_t = (1 - t) x0 + t x1 and its velocity target x1 - x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ValueError("endpoints must have equal shape")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    return (1.0 - t) * x0 + t * x1, x1 - x0


def fm_loss(field, batch: FlowBatch) -> float:
    """Mean squared Euclidean error between predicted and target velocities."""
    x_t = (1.0 - batch.t)[:, None] * batch.x0 + batch.t[:, None] * batch.x1
    target = batch.x1 - batch.x0
    pred = np.atleast_2d(field(batch.t, batch.cond, x_t))
    return float(np.mean(np.sum((pred - target) ** 2, axis=1)))


def _loss_and_grads(field: MlpField, batch: FlowBatch):
    x_t = (1.0 - batch.t)[:, None] * batch.x0 + batch.t[:, None] * batch.x1
    target = batch.x1 - batch.x0
    a0, _ = field._stack_input(batch.t, batch.cond, x_t)
    z1 = a0 @ field.w1.T + field.b1
    h1 = np.tanh(z1)
    z2 = h1 @ field.w2.T + field.b2
    h2 = np.tanh(z2)
    out = h2 @ field.w3.T + field.b3
    diff = out - target
    n = batch.size
    loss = float(np.mean(np.sum(diff**2, axis=1)))
    d_out = (2.0 / n) * diff
    g_w3 = d_out.T @ h2
    g_b3 = d_out.sum(axis=0)
    d_h2 = d_out @ field.w3
    d_z2 = d_h2 * (1.0 - h2**2)
    g_w2 = d_z2.T @ h1
    g_b2 = d_z2.sum(axis=0)
    d_h1 = d_z2 @ field.w2
    d_z1 = d_h1 * (1.0 - h1**2)
    g_w1 = d_z1.T @ a0
    g_b1 = d_z1.sum(axis=0)
    return loss, (g_w1, g_b1, g_w2, g_b2, g_w3, g_b3)


@dataclass
class AdamState:
    """First/second moment accumulators for one field's parameters."""

    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    step: int = 0

    @staticmethod
    def zeros_like(field: MlpField) -> "AdamState":
        return AdamState(
            m=tuple(np.zeros_like(p) for p in field.params()),
            v=tuple(np.zeros_like(p) for p in field.params()),
        )


def train_step(
    field: MlpField,
    batch: FlowBatch,
    learning_rate: float,
    state: AdamState | None = None,
) -> tuple[MlpField, AdamState, float]:
    """One Adam update on the flow-matching loss.

    Gradients are exact backpropagation; the Adam moments live in `state`
    (created on first use) and must be threaded between calls. Returns the
    pre-update loss.
    """
    if learning_rate <= 0.0:
        raise ValueError("learning_rate must be positive")
    state = state or AdamState.zeros_like(field)
    loss, grads = _loss_and_grads(field, batch)
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise FloatingPointError("non-finite gradient in train_step")
    step = state.step + 1
    new_m, new_v, new_params = [], [], []
    for p, g, m, v in zip(field.params(), grads, state.m, state.v):
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g**2
        m_hat = m / (1.0 - ADAM_BETA1**step)
        v_hat = v / (1.0 - ADAM_BETA2**step)
        new_params.append(p - learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS))
        new_m.append(m)
        new_v.append(v)
    names = ("w1", "b1", "w2", "b2", "w3", "b3")
    updated = replace(field, **dict(zip(names, new_params)))
    return updated, AdamState(m=tuple(new_m), v=tuple(new_v), step=step), loss


def euler_sample(field, z0: np.ndarray, condition, steps: int) -> np.ndarray:
    """Integrate dx/dt = field(t, cond, x) from t = 0 to 1, uniform steps.

    Accepts one start vector or an (n, d) batch (all rows share the time
    grid). Raises on non-finite intermediate states.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.array(z0, dtype=np.float64)
    dt = 1.0 / steps
    for i in range(steps):
        v = np.asarray(field(i * dt, condition, x), dtype=np.float64)
        x = x + v * dt
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at integration step {i}")
    return x


def gaussian_oracle_velocity(
    t: float,
    x: np.ndarray | float,
    base: tuple[float, float],
    target: tuple[float, float],
) -> np.ndarray | float:
    """Exact E[x1 - x0 | x_t = x] for independent Gaussian endpoints.

    base and target are (mean, std) pairs; the base std must be positive.
    On the linear path, (x1 - x0, x_t) is jointly Gaussian, giving

        v(t, x) = (mu1 - mu0) + (t s1^2 - (1-t) s0^2) / Var[x_t] * (x - E[x_t])

    with Var[x_t] = (1-t)^2 s0^2 + t^2 s1^2. At t = 1 with a point-mass
    target the conditioning degenerates and an error is raised.
    """
    mu0, s0 = float(base[0]), float(base[1])
    mu1, s1 = float(target[0]), float(target[1])
    if s0 <= 0.0:
        raise ValueError("base std must be positive")
    if s1 < 0.0:
        raise ValueError("target std must be non-negative")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    var_t = (1.0 - t) ** 2 * s0**2 + t**2 * s1**2
    if var_t == 0.0:
        raise ValueError("degenerate conditioning: Var[x_t] = 0")
    coeff = (t * s1**2 - (1.0 - t) * s0**2) / var_t
    mean_t = (1.0 - t) * mu0 + t * mu1
    return (mu1 - mu0) + coeff * (np.asarray(x, dtype=np.float64) - mean_t)


def flatten_params(field: MlpField) -> np.ndarray:
    return np.concatenate([p.ravel() for p in field.params()])


def with_params(field: MlpField, flat: np.ndarray) -> MlpField:
    """Rebuild a field from a flat parameter vector (same layer sizes)."""
    flat = np.asarray(flat, dtype=np.float64)
    names = ("w1", "b1", "w2", "b2", "w3", "b3")
    chunks = {}
    idx = 0
    for name, p in zip(names, field.params()):
        chunks[name] = flat[idx : idx + p.size].reshape(p.shape)
        idx += p.size
    if idx != flat.size:
        raise ValueError("flat vector length does not match parameter count")
    return replace(field, **chunks)


def save_field(field: MlpField, prefix: str | Path, meta: dict | None = None) -> None:
    """Persist parameters as raw float64 plus a JSON header next to them."""
    prefix = Path(prefix)
    flat = flatten_params(field)
    flat.tofile(prefix.with_suffix(".bin"))
    header = {
        "dim_cond": field.dim_cond,
        "dim_x": field.dim_x,
        "hidden": field.hidden,
        "activation": "tanh",
        "layer_sizes": [list(p.shape) for p in field.params()],
        "param_count": int(flat.size),
        "config_hash": hashlib.sha256(
            json.dumps(meta or {}, sort_keys=True).encode()
        ).hexdigest()[:16],
        "meta": meta or {},
    }
    prefix.with_suffix(".json").write_text(json.dumps(header, indent=2))


def load_field(prefix: str | Path) -> MlpField:
    prefix = Path(prefix)
    header = json.loads(prefix.with_suffix(".json").read_text())
    if header.get("activation") != "tanh":
        raise ValueError(f"unsupported activation: {header.get('activation')}")
    skeleton = init_mlp_field(
        header["dim_cond"], header["dim_x"], header["hidden"], SeededStream(0)
    )
    flat = np.fromfile(prefix.with_suffix(".bin"), dtype=np.float64)
    if flat.size != header["param_count"]:
        raise ValueError("parameter file does not match header")
    return with_params(skeleton, flat)
