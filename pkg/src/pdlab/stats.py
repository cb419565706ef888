"""Exact oracles, Monte Carlo estimators and the few tests the checks rely on."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats as sps

from .core import Params, PdlabError, chunk_sizes, make_rng, parallel_map
from .samplers import urn_run

KS_C_001 = 1.63


class TooFewSamples(PdlabError, ValueError):
    pass


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be >= 0")
        if self.n_samples < 2:
            raise ValueError("need at least two samples")

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.std_error

    def z_score(self, target: float) -> float:
        if self.std_error == 0:
            return 0.0 if self.mean == target else math.inf
        return (self.mean - target) / self.std_error


def mc_estimate(samples) -> McEstimate:
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least two samples")
    return McEstimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), int(x.size))


def variance_estimate(samples) -> McEstimate:
    """Sample variance with the delta-method standard error sqrt((m4 - s^4)/N)."""
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    d = x - x.mean()
    var = float(d @ d / (n - 1))
    m4 = float(np.mean(d ** 4))
    return McEstimate(var, math.sqrt(max(m4 - var * var, 0.0) / n), n)


def expected_k(p: Params, n: int) -> float:
    """E[K_n] from E[K_{i+1}] = E[K_i](1 + alpha/(theta+i)) + theta/(theta+i), E[K_1] = 1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ek = 1.0
    for i in range(1, n):
        ek = ek * (1.0 + p.alpha / (p.theta + i)) + p.theta / (p.theta + i)
    return ek


def coincidence_moment(p: Params) -> float:
    """E[phi_2] under PD(theta, alpha): the chance the second urn draw joins the first block."""
    return (1.0 - p.alpha) / (1.0 + p.theta)


@dataclass(frozen=True)
class KsResult:
    statistic: float
    n: int
    threshold: float

    @property
    def passed(self) -> bool:
        return self.statistic < self.threshold


def ks_threshold(n: int) -> float:
    """Asymptotic level-0.01 critical value of the one-sample KS statistic."""
    return KS_C_001 / math.sqrt(n)


def ks_test(samples, cdf: Callable) -> KsResult:
    """One-sample KS statistic sup |F_emp - F|."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    if n < 100:
        raise TooFewSamples(f"KS test needs at least 100 samples, got {n}")
    f = np.asarray(cdf(x), dtype=np.float64)
    i = np.arange(1, n + 1)
    d = max(float(np.max(i / n - f)), float(np.max(f - (i - 1) / n)))
    return KsResult(min(max(d, 0.0), 1.0), n, ks_threshold(n))


def ks_two_sample(a, b) -> float:
    """Two-sample KS distance; ties (lattice-valued chains) are handled exactly."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    grid = np.concatenate((a, b))
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


@dataclass(frozen=True)
class PoissonFit:
    chi2: float
    dof: int
    p_value: float
    bins: tuple
    passed: bool


def _poisson_bins(lam: float, n: int, min_expected: float = 5.0):
    """Contiguous bins [lo, hi] (hi = inf for the right tail) with expected count >= min_expected."""
    kmax = int(sps.poisson.ppf(1.0 - 1e-12, lam)) + 1
    pmf = sps.poisson.pmf(np.arange(kmax + 1), lam)
    edges, probs = [], []
    lo, acc = 0, 0.0
    for k in range(kmax + 1):
        acc += pmf[k]
        if acc * n >= min_expected:
            edges.append([lo, k])
            probs.append(acc)
            lo, acc = k + 1, 0.0
    if not edges:
        return [(0, math.inf)], np.ones(1)
    # remaining mass (leftover accumulator and everything beyond kmax) joins the last bin
    edges[-1][1] = math.inf
    probs[-1] = 1.0 - sum(probs[:-1])
    return [tuple(e) for e in edges], np.array(probs)


def poisson_fit(counts, theta: float, level: float = 0.01) -> PoissonFit:
    """Pearson chi-square of integer counts against Poisson(theta), tail bins pooled."""
    x = np.asarray(counts)
    n = x.size
    edges, probs = _poisson_bins(theta, n)
    obs = np.array([np.count_nonzero((x >= lo) & (x <= hi)) for lo, hi in edges], dtype=float)
    expected = probs * n
    chi2 = float(np.sum((obs - expected) ** 2 / expected))
    dof = len(edges) - 1
    pval = float(sps.chi2.sf(chi2, dof)) if dof > 0 else 1.0
    return PoissonFit(chi2, dof, pval, tuple(edges), pval > level)


def urn_replicates(p: Params, n: int, replicates: int, seed: int, chunk: int = 250,
                   threads: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(K_n, M_{1,n}) over independent urn runs; chunk c uses stream c."""
    def work(item):
        c, size = item
        rng = make_rng(seed, c)
        ks = np.empty(size, dtype=np.int64)
        m1 = np.empty(size, dtype=np.int64)
        for r in range(size):
            s = urn_run(p, n, rng)
            ks[r], m1[r] = s.K, s.M1
        return ks, m1

    parts = parallel_map(work, enumerate(chunk_sizes(replicates, chunk)), threads)
    return (np.concatenate([a for a, _ in parts]), np.concatenate([b for _, b in parts]))


def log_diversity_check(theta: float, n: int, replicates: int, seed: int,
                        threads: int | None = None) -> McEstimate:
    """Monte Carlo mean of K_n / log n for the one-parameter urn (alpha = 0).

    Compare against expected_k(Params(theta, 0), n) / log n. theta = 0 is the
    no-mutation limit where K_n = 1 identically; it is returned exactly.
    """
    if n < 2:
        raise ValueError("need n >= 2 so that log n > 0")
    if theta < 0:
        raise ValueError("theta must be >= 0 when alpha = 0")
    if theta == 0:
        return McEstimate(1.0 / math.log(n), 0.0, max(int(replicates), 2))
    ks, _ = urn_replicates(Params(theta, 0.0), n, replicates, seed, threads=threads)
    return mc_estimate(ks / math.log(n))
