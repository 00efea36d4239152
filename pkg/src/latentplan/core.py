"""Deterministic random streams and diagonal-Gaussian numerics.

All randomness in this package flows through :class:`SeededStream`: a master
seed plus a path of string labels ("episode=3", "iter=2", ...). Streams are
values, not generators -- drawing never mutates a stream, and the same
(stream, request) pair always returns the same numbers. Independence between
siblings comes from hashing each path label with BLAKE2b-64 and feeding the
hashes into a PCG64 counter stream; uniforms are built directly from the top
53 raw bits as (bits + 0.5) / 2**53, and standard normals apply the inverse
normal CDF (scipy.special.ndtri) to those uniforms. No numpy distribution
method is used, so byte-identical draws do not depend on numpy's Generator
internals or on any parallel execution plan.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri


def _label_key(label: str) -> int:
    return int.from_bytes(
        hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little"
    )


@dataclass(frozen=True)
class SeededStream:
    """A reusable, derivable source of deterministic random draws."""

    master_seed: int
    path: tuple[str, ...] = ()

    def derive(self, label: str) -> "SeededStream":
        """Child stream with `label` appended to the path.

        Deriving is pure: the parent is untouched, the same label always
        yields the same child, and distinct labels yield independent streams.
        """
        if not label:
            raise ValueError("stream label must be non-empty")
        return SeededStream(self.master_seed, self.path + (str(label),))

    def _raw(self, n: int) -> np.ndarray:
        entropy = [int(self.master_seed) & 0xFFFFFFFFFFFFFFFF]
        entropy.extend(_label_key(label) for label in self.path)
        bits = np.random.PCG64(np.random.SeedSequence(entropy))
        return bits.random_raw(n)

    def uniform(self, shape: int | tuple[int, ...] = ()) -> np.ndarray:
        """Uniform draws on the open interval (0, 1)."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = self._raw(max(n, 1))
        u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        return u.reshape(shape) if shape else float(u[0])

    def normal(self, shape: int | tuple[int, ...] = ()) -> np.ndarray:
        """Standard-normal draws via the inverse-CDF transform."""
        return ndtri(self.uniform(shape))


def derive_stream(stream: SeededStream, label: str) -> SeededStream:
    return stream.derive(label)


@dataclass(frozen=True)
class DiagonalGaussian:
    """Diagonal Gaussian N(mean, diag(std**2)).

    `std` components may be zero (a fit of identical samples degenerates to a
    point mass); sampling requires them strictly positive, and the planner
    floors fitted stds before use.
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.ndim != 1 or std.ndim != 1 or mean.shape != std.shape:
            raise ValueError("mean and std must be 1-D vectors of equal length")
        if mean.size < 1:
            raise ValueError("distribution must have dimension >= 1")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(std)):
            raise ValueError("mean and std must be finite")
        if np.any(std < 0.0):
            raise ValueError("std components must be non-negative")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.size

    @staticmethod
    def standard(dim: int) -> "DiagonalGaussian":
        return DiagonalGaussian(np.zeros(dim), np.ones(dim))


def gaussian_sample(dist: DiagonalGaussian, stream: SeededStream, count: int) -> np.ndarray:
    """Draw `count` vectors as mean + std * z, z ~ N(0, I) from `stream`.

    Returns an array of shape (count, dim). Deterministic in (dist, stream,
    count): the same call always yields the same draws.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if np.any(dist.std <= 0.0):
        raise ValueError("cannot sample from a distribution with non-positive std")
    z = stream.normal((count, dist.dim))
    return dist.mean + dist.std * z


def gaussian_fit(samples: np.ndarray) -> DiagonalGaussian:
    """Empirical mean and population standard deviation per dimension.

    The std divides by the sample count (not count - 1), matching the elite
    refit rule; a single sample fits std 0. Flooring is the caller's job.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2:
        arr = np.atleast_2d(arr)
    if arr.size == 0:
        raise ValueError("cannot fit a distribution to zero samples")
    if arr.ndim != 2:
        raise ValueError("samples must be a list of equal-length vectors")
    mean = arr.mean(axis=0)
    std = arr.std(axis=0, ddof=0)
    return DiagonalGaussian(mean, std)


def gaussian_blend(
    current: DiagonalGaussian,
    previous: DiagonalGaussian,
    alpha: float,
    beta: float,
) -> DiagonalGaussian:
    """Exponential smoothing: alpha weights the current mean, beta the current std."""
    if not (0.0 <= alpha <= 1.0 and 0.0 <= beta <= 1.0):
        raise ValueError("alpha and beta must lie in [0, 1]")
    if current.dim != previous.dim:
        raise ValueError("cannot blend distributions of different dimension")
    mean = alpha * current.mean + (1.0 - alpha) * previous.mean
    std = beta * current.std + (1.0 - beta) * previous.std
    return DiagonalGaussian(mean, std)


def floor_std(dist: DiagonalGaussian, sigma_min: float) -> DiagonalGaussian:
    """Raise every std component to at least `sigma_min`."""
    if sigma_min <= 0.0:
        raise ValueError("sigma_min must be positive")
    return DiagonalGaussian(dist.mean, np.maximum(dist.std, sigma_min))
