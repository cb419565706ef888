"""GEM / Poisson-Dirichlet stick breaking and the generalised Polya urn."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import expit

from .core import OrderedPoint, Params, PdlabError, order_map

DEFAULT_TRUNC = 1e-10
DEFAULT_STICK_CAP = 10**7


class TruncationOverflow(PdlabError, RuntimeError):
    """Stick count hit the cap before the residual mass dropped below trunc."""

    def __init__(self, msg, sticks=None, residual=None):
        super().__init__(msg)
        self.sticks = sticks
        self.residual = residual


def _log_gamma(rng: np.random.Generator, shape, size=None) -> np.ndarray:
    """log G for G ~ Gamma(shape), via G = G' U^(1/shape) with G' ~ Gamma(shape + 1).

    Small shapes put most of the mass far below the smallest double, so the
    variate is only ever formed in log space.
    """
    shape = np.asarray(shape, dtype=np.float64)
    g = rng.standard_gamma(shape + 1.0, size)
    u = rng.random(g.shape)
    return np.log(g) + np.log(u) / shape


def beta_variates(rng: np.random.Generator, a, b, size=None) -> np.ndarray:
    """Beta(a, b) as G_a / (G_a + G_b), evaluated from the log gammas."""
    la = _log_gamma(rng, a, size)
    lb = _log_gamma(rng, b, size)
    return expit(la - lb)


@dataclass(frozen=True)
class GemDraw:
    """Stick weights V_1..V_K and the unallocated mass prod_{i<=K}(1 - W_i)."""

    weights: np.ndarray
    residual: float

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def K(self) -> int:
        return self.weights.size


def _stick_fractions(p: Params, start: int, count: int, rng, size=None) -> np.ndarray:
    # W_i ~ Beta(1 - alpha, theta + i alpha) for i = start, ..., start + count - 1 (1-based)
    i = np.arange(start, start + count, dtype=np.float64)
    shape = (count,) if size is None else (size, count)
    return beta_variates(rng, np.broadcast_to(1.0 - p.alpha, shape),
                         np.broadcast_to(p.theta + i * p.alpha, shape))


def sample_gem(p: Params, trunc: float = DEFAULT_TRUNC, rng: np.random.Generator | None = None,
               cap: int = DEFAULT_STICK_CAP) -> GemDraw:
    """Break sticks until the residual mass falls below ``trunc``.

    Raises TruncationOverflow once ``cap`` sticks have been drawn without
    getting there. For alpha >= 0.5 and trunc = 1e-10 that happens on
    essentially every draw: the residual decays only polynomially in K.
    """
    if not (0.0 < trunc < 1.0):
        raise ValueError(f"trunc must lie in (0, 1), got {trunc!r}")
    rng = np.random.default_rng() if rng is None else rng
    fractions = []
    log_resid = 0.0
    drawn = 0
    chunk = 256
    while True:
        count = min(chunk, cap - drawn)
        if count <= 0:
            raise TruncationOverflow(
                f"residual mass {np.exp(log_resid):.3e} still >= trunc={trunc:g} after {drawn} sticks",
                sticks=drawn, residual=float(np.exp(log_resid)))
        w = _stick_fractions(p, drawn + 1, count, rng)
        lr = log_resid + np.cumsum(np.log1p(-w))
        hit = np.flatnonzero(lr < np.log(trunc))
        if hit.size:
            fractions.append(w[: hit[0] + 1])
            break
        fractions.append(w)
        log_resid = lr[-1]
        drawn += count
        chunk = min(chunk * 2, 1 << 20)
    w = np.concatenate(fractions)
    return _gem_from_fractions(w)


def _gem_from_fractions(w: np.ndarray) -> GemDraw:
    remaining = np.cumprod(1.0 - w)
    before = np.concatenate(([1.0], remaining[:-1]))
    return GemDraw(w * before, float(remaining[-1]))


def sample_gem_sticks(p: Params, k: int, size: int, rng: np.random.Generator):
    """First ``k`` stick weights for ``size`` independent draws.

    Returns (weights of shape (size, k), residual of shape (size,)).
    """
    w = _stick_fractions(p, 1, k, rng, size=size)
    remaining = np.cumprod(1.0 - w, axis=1)
    before = np.concatenate((np.ones((size, 1)), remaining[:, :-1]), axis=1)
    return w * before, remaining[:, -1]


def sample_pd(p: Params, trunc: float = DEFAULT_TRUNC, rng: np.random.Generator | None = None,
              cap: int = DEFAULT_STICK_CAP) -> OrderedPoint:
    """Ranked GEM weights. The discarded mass is ``1 - z.sum()`` (< trunc)."""
    return order_map(sample_gem(p, trunc, rng, cap).weights)


def pd_top(p: Params, n: int, rng: np.random.Generator, sticks: int | None = None) -> np.ndarray:
    """The ``n`` largest atoms of a PD draw, renormalised to sum to one.

    Breaks a fixed number of sticks (default max(20 n, 2000)), ranks them and
    drops everything beyond rank n; that is what "truncated to n types" means
    for the finite-dimensional models.
    """
    sticks = max(20 * n, 2000) if sticks is None else max(int(sticks), n)
    weights, _ = sample_gem_sticks(p, sticks, 1, rng)
    top = -np.sort(-weights[0])[:n]
    return top / top.sum()


# -- Polya urn ---------------------------------------------------------------

@dataclass(frozen=True)
class PartitionState:
    """Block sizes of an exchangeable partition of n items."""

    block_sizes: np.ndarray

    def __post_init__(self):
        b = np.array(self.block_sizes, dtype=np.int64)
        if b.ndim != 1 or (b.size and b.min() < 1):
            raise ValueError("block sizes must be a vector of positive integers")
        b.setflags(write=False)
        object.__setattr__(self, "block_sizes", b)

    @property
    def n(self) -> int:
        return int(self.block_sizes.sum())

    @property
    def K(self) -> int:
        return int(self.block_sizes.size)

    @property
    def M1(self) -> int:
        return int(np.count_nonzero(self.block_sizes == 1))

    def frequencies(self) -> OrderedPoint:
        return order_map(self.block_sizes / self.n)


@njit(cache=True, nogil=True)
def _urn_advance(theta, alpha, sizes, K, u):
    """Seat len(u) customers; ``sizes[:K]`` holds the current blocks (mutated)."""
    i = 0
    for b in range(K):
        i += sizes[b]
    for step in range(u.size):
        r = u[step] * (theta + i)
        new = theta + alpha * K
        if r < new:
            sizes[K] = 1
            K += 1
        else:
            r -= new
            j = 0
            while j < K - 1:
                r -= sizes[j] - alpha
                if r < 0.0:
                    break
                j += 1
            sizes[j] += 1
        i += 1
    return K


def urn_init() -> PartitionState:
    """The first draw always opens block 1."""
    return PartitionState(np.ones(1, dtype=np.int64))


def urn_new_block_prob(s: PartitionState, p: Params) -> float:
    return (p.theta + p.alpha * s.K) / (p.theta + s.n)


def urn_block_probs(s: PartitionState, p: Params) -> np.ndarray:
    """Probabilities of joining each existing block; they sum to 1 - new-block prob."""
    return (s.block_sizes - p.alpha) / (p.theta + s.n)


def urn_next(s: PartitionState, p: Params, rng: np.random.Generator) -> PartitionState:
    if s.n < 1:
        raise ValueError("urn_next needs at least one seated item; start from urn_init()")
    sizes = np.empty(s.K + 1, dtype=np.int64)
    sizes[: s.K] = s.block_sizes
    K = _urn_advance(p.theta, p.alpha, sizes, s.K, np.array([rng.random()]))
    return PartitionState(sizes[:K])


def urn_run(p: Params, n: int, rng: np.random.Generator) -> PartitionState:
    """Partition of n sequential urn draws (consumes n - 1 uniforms)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    sizes = np.zeros(n, dtype=np.int64)
    sizes[0] = 1
    K = _urn_advance(p.theta, p.alpha, sizes, 1, rng.random(n - 1))
    return PartitionState(sizes[:K])
