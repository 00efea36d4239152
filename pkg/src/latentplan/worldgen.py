"""Trajectory spaces, synthetic worlds, and latent-to-trajectory decoders.

Two generators live here. The affine generator maps latents onto a thin
affine patch inside a bounded box and is the workhorse of the geometry
experiments; an optional off-manifold emission with probability `delta`
turns the generator-quality assumption into a controlled knob. The control
knot generator maps latents to piecewise-constant accelerations for a 2-D
point mass (semi-implicit Euler double integrator) and renders a grayscale
frame per step, standing in for a learned trajectory generator at desk
scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import SeededStream

OBSTACLE_SHADE = 0.3
GOAL_SHADE = 0.6
AGENT_SHADE = 1.0


@dataclass(frozen=True)
class TrajectorySpace:
    """Bounded box of horizon-H state/action sequences.

    The ambient dimension is H * (dim_state + dim_action); `bounds` holds one
    closed interval per ambient coordinate, shape (D, 2).
    """

    horizon: int
    dim_state: int
    dim_action: int
    bounds: np.ndarray

    def __post_init__(self):
        if self.horizon < 1 or self.dim_state < 1 or self.dim_action < 1:
            raise ValueError("horizon and dimensions must be positive")
        bounds = np.asarray(self.bounds, dtype=np.float64)
        D = self.horizon * (self.dim_state + self.dim_action)
        if bounds.shape != (D, 2):
            raise ValueError(f"bounds must have shape ({D}, 2)")
        if not np.all(np.isfinite(bounds)) or np.any(bounds[:, 0] >= bounds[:, 1]):
            raise ValueError("bounds must be finite nonempty intervals")
        bounds.setflags(write=False)
        object.__setattr__(self, "bounds", bounds)

    @property
    def ambient_dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.bounds[:, 1] - self.bounds[:, 0]))

    def sample_uniform(self, stream: SeededStream, count: int) -> np.ndarray:
        """`count` points uniform in the box, shape (count, D)."""
        u = stream.uniform((count, self.ambient_dim))
        return self.bounds[:, 0] + u * (self.bounds[:, 1] - self.bounds[:, 0])


@dataclass(frozen=True)
class Trajectory:
    """H-step rollout: states (H, dim_state), actions (H, dim_action), and
    optionally one rendered frame per step, shape (H, size, size)."""

    states: np.ndarray
    actions: np.ndarray
    frames: np.ndarray | None = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        actions = np.asarray(self.actions, dtype=np.float64)
        if states.ndim != 2 or actions.ndim != 2:
            raise ValueError("states and actions must be 2-D arrays")
        if states.shape[0] != actions.shape[0]:
            raise ValueError("states and actions must have the same horizon")
        for arr in (states, actions):
            arr.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        if self.frames is not None:
            frames = np.asarray(self.frames, dtype=np.float64)
            if frames.shape[0] != states.shape[0]:
                raise ValueError("one frame per step required")
            frames.setflags(write=False)
            object.__setattr__(self, "frames", frames)

    @property
    def horizon(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class AffineManifoldSpec:
    """Affine patch {offset + basis @ u : u in [0, 1]^d} with tolerance epsilon.

    basis is D x d with orthonormal columns and d < D. With probability
    `delta` the decoder emits a point displaced off the patch by
    off_scale * epsilon along a direction orthogonal to it; off_scale > 1
    makes every such emission infeasible by construction.
    """

    basis: np.ndarray
    offset: np.ndarray
    epsilon: float
    delta: float = 0.0
    off_scale: float = 2.0

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=np.float64)
        offset = np.asarray(self.offset, dtype=np.float64)
        if basis.ndim != 2:
            raise ValueError("basis must be a D x d matrix")
        D, d = basis.shape
        if not 1 <= d < D:
            raise ValueError("need 1 <= intrinsic dim < ambient dim")
        gram = basis.T @ basis
        if not np.allclose(gram, np.eye(d), atol=1e-10):
            raise ValueError("basis columns must be orthonormal")
        if offset.shape != (D,) or not np.all(np.isfinite(offset)):
            raise ValueError("offset must be a finite D-vector")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.off_scale <= 1.0:
            raise ValueError("off_scale must exceed 1 (guarantees infeasibility)")
        basis.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "offset", offset)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def intrinsic_dim(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class PointMassWorld:
    """2-D point mass with circular obstacles in a rectangular workspace.

    State is (px, py, vx, vy); actions are accelerations clamped per
    component to +/- accel_limit. The horizon must be divisible by the knot
    count so each control knot covers an equal run of steps. Obstacles do
    not block motion; collisions are penalized by the valuation module.
    """

    dt: float = 0.1
    start: tuple[float, float, float, float] = (0.3, 0.3, 0.0, 0.0)
    goal: tuple[float, float] = (1.91, 1.91)
    obstacles: tuple[tuple[float, float, float], ...] = ((1.4, 1.4, 0.22),)
    workspace: tuple[float, float, float, float] = (0.0, 2.0, 0.0, 2.0)
    horizon: int = 64
    knots: int = 8
    accel_limit: float = 1.5
    image_size: int = 32
    goal_radius: float = 0.12
    agent_radius: float = 0.1
    # Task definitions require start/goal clear of obstacles; worlds re-rooted
    # mid-episode may sit inside one (dynamics pass through) and skip the check.
    check_clearance: bool = True

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "goal", tuple(float(v) for v in self.goal))
        object.__setattr__(
            self,
            "obstacles",
            tuple(tuple(float(v) for v in ob) for ob in self.obstacles),
        )
        object.__setattr__(self, "workspace", tuple(float(v) for v in self.workspace))
        xmin, xmax, ymin, ymax = self.workspace
        if not (xmin < xmax and ymin < ymax):
            raise ValueError("workspace must be a nonempty box")
        if self.dt <= 0.0 or self.accel_limit <= 0.0:
            raise ValueError("dt and accel_limit must be positive")
        if self.image_size < 8:
            raise ValueError("image_size must be at least 8 pixels")
        if not 1 <= self.knots <= self.horizon or self.horizon % self.knots != 0:
            raise ValueError("horizon must be a positive multiple of knots")
        if len(self.start) != 4 or len(self.goal) != 2:
            raise ValueError("start must be (px, py, vx, vy); goal (gx, gy)")
        for label, pos in (("start", self.start[:2]), ("goal", self.goal)):
            if not (xmin <= pos[0] <= xmax and ymin <= pos[1] <= ymax):
                raise ValueError(f"{label} position outside workspace")
            if self.check_clearance:
                for cx, cy, r in self.obstacles:
                    if (pos[0] - cx) ** 2 + (pos[1] - cy) ** 2 <= r * r:
                        raise ValueError(f"{label} position inside an obstacle")

    @property
    def latent_dim(self) -> int:
        return 2 * self.knots

    @property
    def diagonal(self) -> float:
        xmin, xmax, ymin, ymax = self.workspace
        return float(np.hypot(xmax - xmin, ymax - ymin))

    def goal_state(self) -> np.ndarray:
        return np.array([self.goal[0], self.goal[1], 0.0, 0.0])


@lru_cache(maxsize=32)
def _pixel_grid(workspace, image_size):
    xmin, xmax, ymin, ymax = workspace
    n = image_size
    xs = xmin + (np.arange(n) + 0.5) * (xmax - xmin) / n
    ys = ymin + (np.arange(n) + 0.5) * (ymax - ymin) / n
    X, Y = np.meshgrid(xs, ys)
    X.setflags(write=False)
    Y.setflags(write=False)
    return X, Y


@lru_cache(maxsize=32)
def _static_layer(workspace, obstacles, goal, goal_radius, image_size):
    X, Y = _pixel_grid(workspace, image_size)
    img = np.zeros((image_size, image_size))
    for cx, cy, r in obstacles:
        img[(X - cx) ** 2 + (Y - cy) ** 2 <= r * r] = OBSTACLE_SHADE
    gx, gy = goal
    img[(X - gx) ** 2 + (Y - gy) ** 2 <= goal_radius**2] = GOAL_SHADE
    img.setflags(write=False)
    return img


def render_batch(world: PointMassWorld, states: np.ndarray) -> np.ndarray:
    """Rasterize a batch of states in one shot, shape (n, size, size)."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    px = states[:, 0]
    py = states[:, 1]
    xmin, xmax, ymin, ymax = world.workspace
    if np.any(px < xmin) or np.any(px > xmax) or np.any(py < ymin) or np.any(py > ymax):
        raise ValueError("agent position outside workspace")
    layer = _static_layer(
        world.workspace, world.obstacles, world.goal, world.goal_radius, world.image_size
    )
    X, Y = _pixel_grid(world.workspace, world.image_size)
    frames = np.broadcast_to(layer, (states.shape[0],) + layer.shape).copy()
    mask = (X - px[:, None, None]) ** 2 + (Y - py[:, None, None]) ** 2
    frames[mask <= world.agent_radius**2] = AGENT_SHADE
    return frames


def render(world: PointMassWorld, state: np.ndarray) -> np.ndarray:
    """Rasterize one state: background 0, obstacles 0.3, goal 0.6, agent 1.0.

    The agent disc is drawn last and overwrites everything under it. A pixel
    takes a shade iff its center lies inside the corresponding disc (no
    anti-aliasing), so frames are a pure function of (world, state).
    """
    return render_batch(world, np.asarray(state, dtype=np.float64)[None, :])[0]


def rollout(
    actions: np.ndarray, world: PointMassWorld, render_frames: bool = True
) -> Trajectory:
    """Integrate an action sequence through the point-mass dynamics.

    Per step: v += a * dt, then p += v * dt (semi-implicit Euler); positions
    are clamped to the workspace with the velocity zeroed on any clamped
    axis. Actions are clamped per component to the acceleration limit, and
    the clamped sequence is what the returned trajectory stores, so
    replaying `traj.actions` reproduces `traj.states` exactly.
    """
    acts = np.asarray(actions, dtype=np.float64)
    if acts.ndim != 2 or acts.shape[1] != 2:
        raise ValueError("actions must have shape (steps, 2)")
    acts = np.clip(acts, -world.accel_limit, world.accel_limit)
    xmin, xmax, ymin, ymax = world.workspace
    dt = world.dt
    px, py, vx, vy = (float(v) for v in world.start)
    rows = []
    for ax, ay in acts.tolist():  # scalar float math: the loop is the hot path
        vx += ax * dt
        vy += ay * dt
        px += vx * dt
        py += vy * dt
        if px < xmin:
            px, vx = xmin, 0.0
        elif px > xmax:
            px, vx = xmax, 0.0
        if py < ymin:
            py, vy = ymin, 0.0
        elif py > ymax:
            py, vy = ymax, 0.0
        rows.append((px, py, vx, vy))
    states = np.array(rows, dtype=np.float64).reshape(len(rows), 4)
    frames = render_batch(world, states) if render_frames else None
    return Trajectory(states=states, actions=acts, frames=frames)


def decode_knots(z: np.ndarray, world: PointMassWorld) -> Trajectory:
    """Decode a latent into a trajectory via tanh-squashed acceleration knots.

    z has dimension 2 * knots; each knot is scaled into the acceleration box
    by tanh and held constant for horizon / knots steps before rollout.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (world.latent_dim,):
        raise ValueError(f"latent must have dimension {world.latent_dim}")
    knots = np.tanh(z.reshape(world.knots, 2)) * world.accel_limit
    acts = np.repeat(knots, world.horizon // world.knots, axis=0)
    return rollout(acts, world)


def _decode_affine_batch(
    Z: np.ndarray, spec: AffineManifoldSpec, stream: SeededStream
) -> tuple[np.ndarray, np.ndarray]:
    n = Z.shape[0]
    u = 1.0 / (1.0 + np.exp(-Z))
    points = spec.offset + u @ spec.basis.T
    on_manifold = np.ones(n, dtype=bool)
    if spec.delta > 0.0:
        flips = stream.derive("offmanifold").uniform(n) < spec.delta
        if np.any(flips):
            g = stream.derive("direction").normal((n, spec.ambient_dim))
            g = g - (g @ spec.basis) @ spec.basis.T
            norms = np.linalg.norm(g, axis=1, keepdims=True)
            g = g / np.where(norms == 0.0, 1.0, norms)
            points = np.where(
                flips[:, None], points + spec.off_scale * spec.epsilon * g, points
            )
            on_manifold = ~flips
    return points, on_manifold


def decode_affine(
    z: np.ndarray, spec: AffineManifoldSpec, stream: SeededStream
) -> tuple[np.ndarray, bool]:
    """Decode one latent onto the affine patch.

    The latent is squashed componentwise by the logistic function into the
    unit parameter box and mapped through the basis. With probability delta
    the output is pushed off the patch by off_scale * epsilon along a random
    orthogonal direction and reported as off-manifold.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (spec.intrinsic_dim,):
        raise ValueError(f"latent must have dimension {spec.intrinsic_dim}")
    points, on_manifold = _decode_affine_batch(z[None, :], spec, stream)
    return points[0], bool(on_manifold[0])


def manifold_distance(x: np.ndarray, spec: AffineManifoldSpec) -> float | np.ndarray:
    """Euclidean distance from x to the affine patch.

    Accepts a single D-vector or an (n, D) batch. Because the basis is
    orthonormal and the parameter box is axis-aligned, the box-clamped
    projection is the exact nearest point.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.ndim != 2 or pts.shape[1] != spec.ambient_dim:
        raise ValueError(f"points must have ambient dimension {spec.ambient_dim}")
    centered = pts - spec.offset
    u = np.clip(centered @ spec.basis, 0.0, 1.0)
    resid = centered - u @ spec.basis.T
    dist = np.linalg.norm(resid, axis=1)
    return float(dist[0]) if single else dist


def is_feasible(x: np.ndarray, spec: AffineManifoldSpec) -> bool | np.ndarray:
    """Membership test for the epsilon-neighborhood of the patch."""
    dist = manifold_distance(x, spec)
    if isinstance(dist, float):
        return dist <= spec.epsilon
    return dist <= spec.epsilon


def extract_action_chunk(traj: Trajectory, chunk_len: int) -> np.ndarray:
    """First chunk_len rows of the trajectory's action sequence."""
    if not 1 <= chunk_len <= traj.horizon:
        raise ValueError("chunk_len must lie in [1, horizon]")
    return traj.actions[:chunk_len]


def obstacle_penetration(world: PointMassWorld, positions: np.ndarray) -> np.ndarray:
    """Per-position penetration depth summed over obstacles, shape (n,)."""
    pos = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    depth = np.zeros(pos.shape[0])
    for cx, cy, r in world.obstacles:
        d = np.hypot(pos[:, 0] - cx, pos[:, 1] - cy)
        depth += np.maximum(0.0, r - d)
    return depth
