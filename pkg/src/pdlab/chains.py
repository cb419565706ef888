"""Moran-type particle chain and the species-count chain K_n(m)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numba import njit

from .core import Params, PathRecord, PdlabError, order_map
from .samplers import PartitionState, urn_run

Variant = Literal["exact", "markovized"]
CLAMP_TOL = 1e-6
_UNIFORM_CHUNK = 1 << 20


class InvalidProbability(PdlabError, ValueError):
    """Markovized kernel needed more than CLAMP_TOL of clamping."""


@dataclass(frozen=True)
class ParticleSystem:
    """n exchangeable particles summarised by the block sizes of their types."""

    partition: PartitionState

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def k(self) -> int:
        return self.partition.K

    @property
    def m1(self) -> int:
        return self.partition.M1

    @classmethod
    def monomorphic(cls, n: int) -> "ParticleSystem":
        return cls(PartitionState(np.array([n])))

    @classmethod
    def from_urn(cls, p: Params, n: int, rng) -> "ParticleSystem":
        return cls(urn_run(p, n, rng))


@njit(cache=True, nogil=True)
def _particle_advance(theta, alpha, sizes, K, n, u, k_trace, m1_trace):
    """Run len(u) remove-then-insert steps in place; u has shape (steps, 2).

    Returns the new block count. If the trace arrays are non-empty, K and M1
    after every step are written to them.
    """
    m1 = 0
    for b in range(K):
        if sizes[b] == 1:
            m1 += 1
    trace = k_trace.size > 0
    for t in range(u.shape[0]):
        # remove a uniformly chosen particle
        r = u[t, 0] * n
        j = 0
        while j < K - 1:
            r -= sizes[j]
            if r < 0.0:
                break
            j += 1
        if sizes[j] == 1:
            m1 -= 1
        elif sizes[j] == 2:
            m1 += 1
        sizes[j] -= 1
        if sizes[j] == 0:
            K -= 1
            sizes[j] = sizes[K]
            sizes[K] = 0
        # insert: new type w.p. (theta + alpha k_r)/(theta + n - 1), else copy
        r = u[t, 1] * (theta + n - 1)
        new = theta + alpha * K
        if r < new:
            sizes[K] = 1
            K += 1
            m1 += 1
        else:
            r -= new
            j = 0
            while j < K - 1:
                r -= sizes[j] - alpha
                if r < 0.0:
                    break
                j += 1
            if sizes[j] == 1:
                m1 -= 1
            elif sizes[j] == 0:
                m1 += 1
            sizes[j] += 1
        if trace:
            k_trace[t] = K
            m1_trace[t] = m1
    return K


_NO_TRACE = np.zeros(0, dtype=np.int64)


def _advance(system_sizes: np.ndarray, K: int, n: int, p: Params, steps: int, rng,
             k_trace=None, m1_trace=None) -> int:
    done = 0
    while done < steps:
        m = min(_UNIFORM_CHUNK, steps - done)
        u = rng.random((m, 2))
        kt = _NO_TRACE if k_trace is None else k_trace[done:done + m]
        mt = _NO_TRACE if m1_trace is None else m1_trace[done:done + m]
        K = _particle_advance(p.theta, p.alpha, system_sizes, K, n, u, kt, mt)
        done += m
    return K


def particle_step(s: ParticleSystem, p: Params, rng: np.random.Generator) -> ParticleSystem:
    if s.n < 2:
        raise ValueError("the particle chain needs n >= 2")
    sizes = np.zeros(s.k + 1, dtype=np.int64)
    sizes[: s.k] = s.partition.block_sizes
    K = _particle_advance(p.theta, p.alpha, sizes, s.k, s.n, rng.random((1, 2)), _NO_TRACE, _NO_TRACE)
    return ParticleSystem(PartitionState(sizes[:K]))


def particle_new_type_prob(k_r: int, n: int, p: Params) -> float:
    """Probability that the incoming particle is a new type, k_r blocks left after removal."""
    return (p.theta + p.alpha * k_r) / (p.theta + n - 1)


def particle_run(s: ParticleSystem, p: Params, steps: int, rng, trace: bool = False):
    """Advance ``steps`` particle steps. With ``trace`` also return per-step K and M1."""
    sizes = np.zeros(s.n + 1, dtype=np.int64)
    sizes[: s.k] = s.partition.block_sizes
    kt = mt = None
    if trace:
        kt = np.zeros(steps, dtype=np.int64)
        mt = np.zeros(steps, dtype=np.int64)
    K = _advance(sizes, s.k, s.n, p, steps, rng, kt, mt)
    out = ParticleSystem(PartitionState(sizes[:K]))
    return (out, kt, mt) if trace else out


def _initial_system(p: Params, n: int, init, rng) -> ParticleSystem:
    if isinstance(init, ParticleSystem):
        return init
    if isinstance(init, PartitionState):
        return ParticleSystem(init)
    if init == "monomorphic":
        return ParticleSystem.monomorphic(n)
    if init == "urn":
        return ParticleSystem.from_urn(p, n, rng)
    raise ValueError(f"unknown initial configuration {init!r}")


def _record_steps(times: np.ndarray, scale: float) -> np.ndarray:
    return np.floor(times * scale + 1e-9).astype(np.int64)


def particle_run_rescaled(p: Params, n: int, t: float, record_dt: float, rng,
                          init="monomorphic") -> PathRecord:
    """Ordered relative block sizes at rescaled times 0, record_dt, ... <= t.

    Rescaled time s corresponds to floor(n**2 s) particle steps.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if t < 0 or record_dt <= 0:
        raise ValueError("need t >= 0 and record_dt > 0")
    s = _initial_system(p, n, init, rng)
    times = np.arange(0.0, t + 1e-12, record_dt) if t > 0 else np.zeros(1)
    steps = _record_steps(times, float(n) ** 2)
    sizes = np.zeros(n + 1, dtype=np.int64)
    sizes[: s.k] = s.partition.block_sizes
    K, done = s.k, 0
    values = []
    for target in steps:
        K = _advance(sizes, K, n, p, int(target - done), rng)
        done = int(target)
        values.append(order_map(sizes[:K] / n))
    return PathRecord(times, values)


# -- species-count chain -----------------------------------------------------

@dataclass(frozen=True)
class KChainState:
    n: int
    k: int
    variant: Variant = "markovized"
    m1: int | None = None
    system: ParticleSystem | None = None

    def __post_init__(self):
        if not (1 <= self.k <= self.n):
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.variant == "exact":
            if self.system is None:
                raise ValueError("the exact variant is driven by an underlying ParticleSystem")
            if self.m1 is None or self.m1 > self.k:
                raise ValueError("exact variant needs m1 <= k")
        elif self.variant != "markovized":
            raise ValueError(f"unknown variant {self.variant!r}")

    @classmethod
    def from_system(cls, system: ParticleSystem) -> "KChainState":
        return cls(system.n, system.k, "exact", system.m1, system)


def k_transition_probs_exact(n: int, k: int, m1: int, p: Params) -> tuple[float, float]:
    """(p(k, k+1), p(k, k-1)) given the current number of singleton types."""
    up = (1.0 - m1 / n) * (p.theta + p.alpha * k) / (p.theta + n - 1)
    down = m1 * (n - 1 - p.alpha * (k - 1)) / (n * (p.theta + n - 1))
    if k >= n:
        up = 0.0
    if k <= 1:
        down = 0.0
    return up, down


@njit(cache=True, nogil=True)
def _markov_probs(theta, alpha, n, k):
    """Leading-order Markovized kernel, clamped; returns (up, down, clamped mass)."""
    ak = alpha * k
    up = (1.0 - ak / n) * (theta + ak) / (theta + n - 1)
    down = ak * (n - 1 - alpha * (k - 1)) / (n * (theta + n - 1))
    if k >= n:
        up = 0.0
    if k <= 1:
        down = 0.0
    excess = 0.0
    if up < 0.0:
        excess -= up
        up = 0.0
    if down < 0.0:
        excess -= down
        down = 0.0
    tot = up + down
    if tot > 1.0:
        excess += tot - 1.0
        up /= tot
        down /= tot
    return up, down, excess


def k_transition_probs_markov(n: int, k: int, p: Params) -> tuple[float, float]:
    up, down, excess = _markov_probs(p.theta, p.alpha, n, k)
    if excess > CLAMP_TOL:
        raise InvalidProbability(
            f"Markovized kernel at n={n}, k={k}, theta={p.theta}, alpha={p.alpha} "
            f"needed {excess:.3g} of clamping")
    return up, down


def k_step_exact(s: KChainState, p: Params, rng: np.random.Generator) -> KChainState:
    """K-marginal of one particle step; returns the state of the stepped system."""
    if s.variant != "exact" or s.system is None:
        raise ValueError("k_step_exact needs an exact-variant state carrying its particle system")
    return KChainState.from_system(particle_step(s.system, p, rng))


def k_step_markovized(s: KChainState, p: Params, rng: np.random.Generator) -> KChainState:
    if s.variant != "markovized":
        raise ValueError("k_step_markovized needs a markovized state")
    up, down = k_transition_probs_markov(s.n, s.k, p)
    u = rng.random()
    k = s.k + 1 if u < up else (s.k - 1 if u < up + down else s.k)
    return KChainState(s.n, k, "markovized")


@njit(cache=True, nogil=True)
def _kchain_markov(theta, alpha, n, k, u, offset, rec_steps, out, j):
    """Advance over uniforms u (global step index offset + t); record K at rec_steps."""
    while j < rec_steps.size and rec_steps[j] <= offset:
        out[j] = k
        j += 1
    for t in range(u.size):
        up, down, excess = _markov_probs(theta, alpha, n, k)
        if excess > 1e-6:
            return -1, j
        x = u[t]
        if x < up:
            k += 1
        elif x < up + down:
            k -= 1
        while j < rec_steps.size and rec_steps[j] <= offset + t + 1:
            out[j] = k
            j += 1
    return k, j


def time_scale(n: int, p: Params) -> tuple[float, float]:
    """(steps per unit rescaled time, space scale): (n^(1+a), n^a), or (n log n, log n) at a = 0."""
    if p.alpha > 0:
        return float(n) ** (1.0 + p.alpha), float(n) ** p.alpha
    return n * math.log(n), math.log(n)


def initial_k(n: int, s0: float, p: Params) -> int:
    """k_0 = ceil(s0 * space scale), kept inside [1, n]."""
    return int(min(n, max(1, math.ceil(s0 * time_scale(n, p)[1] - 1e-12))))


def k_run_rescaled(p: Params, n: int, t: float, variant: Variant, rng, s0: float = 0.5,
                   points: int = 101, k0: int | None = None, init="urn") -> PathRecord:
    """K_n(floor(c_n s)) / d_n on an even grid of rescaled times s in [0, t].

    c_n, d_n as in :func:`time_scale`. The markovized chain starts from
    k0 (default ceil(s0 d_n)); the exact chain is the K-marginal of a particle
    system started from ``init`` ("urn", "monomorphic", or a given state).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    c_n, d_n = time_scale(n, p)
    times = np.linspace(0.0, t, points) if t > 0 else np.zeros(1)
    rec = _record_steps(times, c_n)
    total = int(rec[-1])
    ks = np.zeros(rec.size, dtype=np.int64)
    if variant == "markovized":
        k = initial_k(n, s0, p) if k0 is None else int(k0)
        if not 1 <= k <= n:
            raise ValueError(f"k0 must lie in [1, n], got {k}")
        done, j = 0, 0
        while True:
            m = min(_UNIFORM_CHUNK, total - done)
            u = rng.random(m) if m > 0 else np.zeros(0)
            k, j = _kchain_markov(p.theta, p.alpha, n, k, u, done, rec, ks, j)
            if k < 0:
                # re-run the probability check in Python for a descriptive error
                k_transition_probs_markov(n, int(ks[max(j - 1, 0)]), p)
                raise InvalidProbability("Markovized kernel left the valid range")
            done += m
            if done >= total:
                break
    elif variant == "exact":
        s = _initial_system(p, n, init, rng)
        sizes = np.zeros(n + 1, dtype=np.int64)
        sizes[: s.k] = s.partition.block_sizes
        K, done = s.k, 0
        for idx, target in enumerate(rec):
            K = _advance(sizes, K, n, p, int(target - done), rng)
            done = int(target)
            ks[idx] = K
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return PathRecord(times, ks / d_n)
