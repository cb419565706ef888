"""The diversity diffusion dS = theta dt + sqrt(2 alpha S) dB on [0, inf).

S is (alpha / 2) times a squared Bessel process of dimension 2 theta / alpha,
which gives an exact transition sampler when theta > 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Params, PdlabError


class AlphaZero(PdlabError, ValueError):
    pass


class UnsupportedRegime(PdlabError, ValueError):
    pass


@dataclass(frozen=True)
class SState:
    s: float
    absorbed: bool = False

    def __post_init__(self):
        if not self.s >= 0.0:
            raise ValueError(f"diversity level must be >= 0, got {self.s!r}")
        if self.absorbed and self.s != 0.0:
            raise ValueError("an absorbed state sits at 0")


@dataclass(frozen=True)
class BoundaryReport:
    at_zero: str
    at_infinity: str
    recurrence: str


def classify_boundary(p: Params) -> BoundaryReport:
    """Feller classification of 0 and infinity for the diversity diffusion."""
    theta, alpha = p.theta, p.alpha
    if alpha == 0.0:
        raise AlphaZero("alpha = 0 has no noise; S moves deterministically at speed theta")
    if theta <= 0.0:
        at_zero = "absorbing"
    elif theta < alpha:
        at_zero = "instantaneously_reflecting"
    else:
        at_zero = "entrance"
    at_inf = "natural_nonattracting" if theta <= alpha else "natural_attracting"
    recurrence = "null_recurrent" if theta == alpha else "transient"
    return BoundaryReport(at_zero, at_inf, recurrence)


def euler_step(x: SState, p: Params, dt: float, rng: np.random.Generator) -> SState:
    """One full-truncation Euler step; absorption at 0 is a trap when theta <= 0."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if x.absorbed:
        return x
    s, absorbed = _euler_update(np.array([x.s]), np.array([False]), p, dt, rng.standard_normal(1))
    return SState(float(s[0]), bool(absorbed[0]))


def _euler_update(s, absorbed, p: Params, dt: float, xi):
    vol = np.sqrt(2.0 * p.alpha * np.maximum(s, 0.0) * dt)
    out = np.maximum(s + p.theta * dt + vol * xi, 0.0)
    if p.theta <= 0.0:
        absorbed = absorbed | (out == 0.0)
        out = np.where(absorbed, 0.0, out)
    return out, absorbed


@dataclass(frozen=True)
class EulerPaths:
    """Summary of a bundle of Euler paths on [0, t]."""

    terminal: np.ndarray
    minimum: np.ndarray
    absorbed: np.ndarray
    absorbed_at: np.ndarray  # time of absorption, inf if never absorbed


def euler_paths(s0: float, p: Params, dt: float, t: float, n_paths: int,
                rng: np.random.Generator) -> EulerPaths:
    """Vectorised :func:`euler_step` over ``n_paths`` independent paths."""
    if s0 < 0:
        raise ValueError("s0 must be >= 0")
    steps = int(round(t / dt))
    s = np.full(n_paths, float(s0))
    absorbed = np.zeros(n_paths, dtype=bool)
    absorbed_at = np.full(n_paths, np.inf)
    minimum = s.copy()
    for k in range(steps):
        s, new_abs = _euler_update(s, absorbed, p, dt, rng.standard_normal(n_paths))
        fresh = new_abs & ~absorbed
        if fresh.any():
            absorbed_at[fresh] = (k + 1) * dt
        absorbed = new_abs
        np.minimum(minimum, s, out=minimum)
    return EulerPaths(s, minimum, absorbed, absorbed_at)


def besq_dimension(p: Params) -> float:
    return 2.0 * p.theta / p.alpha


def noncentral_chisquare(df, nonc, rng: np.random.Generator, size=None) -> np.ndarray:
    """Poisson mixture of central chi-squares: chi2(df + 2N), N ~ Poisson(nonc / 2).

    The fractional degrees of freedom are handled by the Gamma draw
    chi2(nu) = 2 Gamma(nu / 2), so any df > 0 works.
    """
    df = np.asarray(df, dtype=np.float64)
    nonc = np.asarray(nonc, dtype=np.float64)
    if np.any(df <= 0):
        raise ValueError("degrees of freedom must be positive")
    if np.any(nonc < 0):
        raise ValueError("non-centrality must be >= 0")
    n_pois = rng.poisson(nonc / 2.0, size)
    return 2.0 * rng.standard_gamma(df / 2.0 + n_pois)


def exact_transition_many(s, p: Params, t: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Exact draws of S_t given S_0 = s (array-valued)."""
    if p.alpha <= 0.0 or p.theta <= 0.0:
        raise UnsupportedRegime(
            f"exact transition needs theta > 0 and alpha > 0 (got theta={p.theta}, alpha={p.alpha}); "
            "use euler_step")
    if t <= 0:
        raise ValueError("t must be positive")
    s = np.asarray(s, dtype=np.float64)
    # X = 2S/alpha is BESQ(delta); X_t / t ~ chi2'(delta, X_0 / t)
    x0 = 2.0 * s / p.alpha
    x_t = t * noncentral_chisquare(besq_dimension(p), x0 / t, rng, size)
    return 0.5 * p.alpha * x_t


def exact_transition(x: SState, p: Params, t: float, rng: np.random.Generator) -> SState:
    return SState(float(exact_transition_many(x.s, p, t, rng)))


def transition_mean(s: float, p: Params, t: float) -> float:
    return s + p.theta * t


def transition_var(s: float, p: Params, t: float) -> float:
    return 2.0 * p.alpha * s * t + p.alpha * p.theta * t * t


def generator_apply(f: Callable[[float], float], s: float, p: Params,
                    df: Callable[[float], float] | None = None,
                    d2f: Callable[[float], float] | None = None) -> float:
    """theta f'(s) + alpha s f''(s), with central differences for missing derivatives."""
    if s < 0:
        raise ValueError("s must be >= 0")
    h = 1e-5 * max(1.0, abs(s))
    d1 = df(s) if df is not None else (f(s + h) - f(s - h)) / (2.0 * h)
    d2 = d2f(s) if d2f is not None else (f(s + h) - 2.0 * f(s) + f(s - h)) / (h * h)
    return p.theta * d1 + p.alpha * s * d2


def markov_generator_error(f: Callable, d1: Callable, d2: Callable, p: Params, n: int,
                           grid: np.ndarray) -> float:
    """max over the grid of |n^(1+a) (U_n - I) f(k/n^a) - L f(s)|, k = ceil(s n^a).

    Computed from the Markovized K-chain kernel without any sampling; L f is
    evaluated at the lattice point k / n^a.
    """
    from .chains import k_transition_probs_markov

    if p.alpha <= 0:
        raise AlphaZero("the n^(1+alpha) scaling needs alpha > 0")
    scale = float(n) ** p.alpha
    worst = 0.0
    for s in np.asarray(grid, dtype=np.float64):
        k = int(min(n, max(1, math.ceil(s * scale - 1e-12))))
        x = k / scale
        up, down = k_transition_probs_markov(n, k, p)
        du = f((k + 1) / scale) - f(x)
        dd = f((k - 1) / scale) - f(x)
        approx = float(n) ** (1.0 + p.alpha) * (up * du + down * dd)
        exact = p.theta * d1(x) + p.alpha * x * d2(x)
        worst = max(worst, abs(approx - exact))
    return worst
