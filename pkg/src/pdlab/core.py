"""Shared value types, parameter checks and the seeding policy.

Everything here is an immutable value; arrays held by the types are copied
and flagged read-only on construction.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

SUM_TOL = 1e-12
RENORM_TOL = 1e-9
DEFAULT_EPS_EXPONENT = 1.1


class PdlabError(Exception):
    """Base class for every error raised by the package."""


class ParamError(PdlabError, ValueError):
    pass


class AlphaOutOfRange(ParamError):
    pass


class ThetaTooSmall(ParamError):
    pass


class MOutOfRange(PdlabError, ValueError):
    pass


class SimplexError(PdlabError, ValueError):
    pass


@dataclass(frozen=True)
class Params:
    """The pair (theta, alpha) with 0 <= alpha < 1 and theta > -alpha."""

    theta: float
    alpha: float

    def __post_init__(self):
        theta, alpha = float(self.theta), float(self.alpha)
        if not (0.0 <= alpha < 1.0):
            raise AlphaOutOfRange(f"alpha must satisfy 0 <= alpha < 1, got {alpha!r}")
        if not theta > -alpha:
            raise ThetaTooSmall(f"theta must satisfy theta > -alpha = {-alpha!r}, got {theta!r}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "alpha", alpha)


def validate_params(theta: float, alpha: float) -> Params:
    return Params(theta, alpha)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def default_eps(n: int, exponent: float = DEFAULT_EPS_EXPONENT) -> float:
    """Margin schedule eps_n = n**-exponent (1.1 by default)."""
    return float(n) ** -exponent


def check_eps(n: int, eps: float) -> None:
    if n < 1:
        raise SimplexError(f"n must be a positive integer, got {n}")
    if not (0.0 < eps < 1.0 / n):
        raise SimplexError(f"eps must satisfy 0 < eps < 1/n = {1.0 / n!r}, got {eps!r}")
    if n * eps > 1.0:
        raise SimplexError(f"n*eps must be <= 1, got {n * eps!r}")


@dataclass(frozen=True)
class SimplexPoint:
    """A point of the floored simplex {z : z_i >= eps, sum z_i = 1}.

    Use :meth:`from_array` to build one from raw data; the constructor assumes
    the array is already feasible and only checks it.
    """

    z: np.ndarray
    eps: float

    def __post_init__(self):
        z = _frozen(self.z)
        if z.ndim != 1 or z.size == 0:
            raise SimplexError("z must be a non-empty 1-d vector")
        check_eps(z.size, self.eps)
        if abs(z.sum() - 1.0) > SUM_TOL * max(1.0, z.size / 1e3):
            raise SimplexError(f"coordinates sum to {z.sum()!r}, not 1")
        if z.min() < self.eps:
            raise SimplexError(f"coordinate {z.min()!r} below the floor eps={self.eps!r}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "eps", float(self.eps))

    @property
    def n(self) -> int:
        return self.z.size

    @classmethod
    def from_array(cls, z, eps: float) -> "SimplexPoint":
        """Renormalise small float drift (|sum - 1| <= 1e-9), reject anything larger."""
        z = np.asarray(z, dtype=np.float64)
        total = z.sum()
        if abs(total - 1.0) > RENORM_TOL:
            raise SimplexError(f"coordinates sum to {total!r}; refusing to renormalise")
        z = z / total
        # a floor violation within rounding of eps is float noise, anything more is a bug
        if z.min() < eps * (1.0 - 1e-9):
            raise SimplexError(f"coordinate {z.min()!r} below the floor eps={eps!r}")
        return cls(np.maximum(z, eps), eps)

    @classmethod
    def lift(cls, y, eps: float) -> "SimplexPoint":
        """Map a point y of the plain simplex to eps + (1 - n eps) y."""
        y = np.asarray(y, dtype=np.float64)
        y = np.maximum(y, 0.0)
        y = y / y.sum()
        check_eps(y.size, eps)
        return cls(eps + (1.0 - y.size * eps) * y, eps)

    @classmethod
    def uniform(cls, n: int, eps: float) -> "SimplexPoint":
        return cls(np.full(n, 1.0 / n), eps)


@dataclass(frozen=True)
class OrderedPoint:
    """Finitely supported point of the closed ordered infinite simplex."""

    z: np.ndarray

    def __post_init__(self):
        z = _frozen(self.z)
        if z.ndim != 1:
            raise SimplexError("z must be a 1-d vector")
        if z.size:
            if z.min() < 0.0 or z.max() > 1.0:
                raise SimplexError("entries must lie in [0, 1]")
            if np.any(np.diff(z) > 0.0):
                raise SimplexError("entries must be non-increasing")
            if z.sum() > 1.0 + SUM_TOL * max(1.0, z.size / 1e3):
                raise SimplexError(f"entries sum to {z.sum()!r} > 1")
        object.__setattr__(self, "z", z)

    def __len__(self):
        return self.z.size

    def padded(self, length: int) -> np.ndarray:
        out = np.zeros(max(length, self.z.size))
        out[: self.z.size] = self.z
        return out


def order_map(z) -> OrderedPoint:
    """Decreasing order statistics of z (zeros beyond the support are implicit)."""
    if isinstance(z, (SimplexPoint, OrderedPoint)):
        z = z.z
    z = np.asarray(z, dtype=np.float64)
    return OrderedPoint(-np.sort(-z, kind="stable"))


def phi_m(z, m: int) -> float:
    """Power sum sum_i z_i**m, m >= 2."""
    if int(m) != m or m < 2:
        raise MOutOfRange(f"m must be an integer >= 2, got {m!r}")
    if isinstance(z, (SimplexPoint, OrderedPoint)):
        z = z.z
    z = np.asarray(z, dtype=np.float64)
    return float(np.sum(z ** int(m)))


# -- seeding ---------------------------------------------------------------

@dataclass(frozen=True)
class SeedSpec:
    """(seed, stream) pair; the same pair always yields the same generator state."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if int(self.stream) < 0:
            raise ValueError(f"stream must be non-negative, got {self.stream!r}")

    def rng(self) -> np.random.Generator:
        return make_rng(self.seed, self.stream)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for replica ``stream`` of ``seed``.

    Streams come from SeedSequence spawn keys, so replica r never depends on
    how many other replicas exist or in which order they were run. Several
    indices may be given to address nested streams (check, cell, chunk).
    """
    key = tuple(int(s) for s in stream) or (0,)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def env_seed(default: int = 0) -> int:
    raw = os.environ.get("PDLAB_SEED")
    return default if raw in (None, "") else int(raw)


def chunk_sizes(total: int, chunk: int) -> list[int]:
    """Split ``total`` replicates into fixed-size chunks (last one possibly short)."""
    if total <= 0:
        return []
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])


T = TypeVar("T")
R = TypeVar("R")


def default_threads() -> int:
    return os.cpu_count() or 1


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """Map in a thread pool; results come back in input order."""
    items = list(items)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class PathRecord:
    """Time-indexed samples of a process; values[k] belongs to times[k]."""

    times: np.ndarray
    values: Sequence = field(default_factory=list)

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        if len(self.values) != self.times.size:
            raise ValueError("times and values must have the same length")

    def __len__(self):
        return self.times.size
