"""Finite-dimensional Wright-Fisher diffusions on the floored simplex.

Types carry state-dependent mutation rates
    q_ij(z) = theta/(n-1) + 2 alpha j / (z_i n (n+1)) * [1 - exp(-2 (z_i - eps)/eps)],
where j is the label of the target type. By default labels are ranks in
decreasing frequency, recomputed at every step (``relabel=False`` uses the
coordinate index instead).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import (OrderedPoint, ParamError, Params, PathRecord, PdlabError, SimplexPoint,
                   check_eps, default_eps, order_map)
from .samplers import pd_top

_BRACKET_CUTOFF = 350.0
_NOISE_CHUNK = 4096


class ProjectionFailure(PdlabError, RuntimeError):
    pass


@dataclass(frozen=True)
class WfConfig:
    n: int
    params: Params
    eps: float | None = None
    dt: float = 1e-4
    relabel: bool = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ParamError(f"need an integer n >= 2 types, got {self.n!r}")
        eps = default_eps(self.n) if self.eps is None else float(self.eps)
        check_eps(self.n, eps)
        object.__setattr__(self, "eps", eps)
        if not self.dt > 0:
            raise ParamError(f"dt must be positive, got {self.dt!r}")
        if not self.params.theta > 0:
            # theta/(n-1) is the rate at the floor; it must be a valid (positive) rate
            raise ParamError(f"the finite-dimensional model needs theta > 0, got {self.params.theta!r}")


@dataclass(frozen=True)
class RateMatrix:
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=np.float64)
        off = q[~np.eye(q.shape[0], dtype=bool)]
        if off.size and off.min() < 0:
            raise ValueError("off-diagonal rates must be non-negative")
        if np.abs(q.sum(axis=1)).max() >= 1e-12:
            raise ValueError("rows must sum to zero")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)


@njit(cache=True)
def _bracket(z, eps):
    """1 - exp(-2 (z - eps) / eps), exactly 1 once (z - eps)/eps > 350."""
    out = np.empty(z.size)
    for i in range(z.size):
        x = (z[i] - eps) / eps
        if x > _BRACKET_CUTOFF:
            out[i] = 1.0
        elif x <= 0.0:
            out[i] = 0.0
        else:
            out[i] = -math.expm1(-2.0 * x)
    return out


@njit(cache=True)
def _labels(z, relabel):
    n = z.size
    lab = np.empty(n)
    if relabel:
        order = np.argsort(-z, kind="mergesort")
        for r in range(n):
            lab[order[r]] = r + 1.0
    else:
        for i in range(n):
            lab[i] = i + 1.0
    return lab


@njit(cache=True)
def _drift(z, theta, alpha, eps, relabel):
    n = z.size
    br = _bracket(z, eps)
    lab = _labels(z, relabel)
    total = br.sum()
    b = np.empty(n)
    for i in range(n):
        b[i] = (theta * (1.0 - z[i]) / (n - 1) - theta * z[i]
                + 2.0 * alpha * lab[i] / (n * (n + 1.0)) * total - alpha * br[i])
    return b


@njit(cache=True, nogil=True)
def _wf_step_core(z, xi, theta, alpha, eps, dt, relabel):
    n = z.size
    c = 1.0 - n * eps
    b = _drift(z, theta, alpha, eps, relabel)
    y = np.maximum((z - eps) / c, 0.0)
    sy = np.sqrt(y)
    dot = 0.0
    for i in range(n):
        dot += sy[i] * xi[i]
    sdt = math.sqrt(dt)
    ynew = np.empty(n)
    for i in range(n):
        # sigma = c (diag(sqrt y) - y sqrt(y)^T) satisfies sigma sigma^T = a(z)
        noise = c * (sy[i] * xi[i] - y[i] * dot)
        ynew[i] = y[i] + (0.5 * b[i] * dt + noise * sdt) / c
        if ynew[i] < 0.0:
            ynew[i] = 0.0
    tot = ynew.sum()
    if not tot > 0.0:
        return np.full(n, np.nan)
    return eps + c * (ynew / tot)


@njit(cache=True, nogil=True)
def _wf_advance(z, xi, theta, alpha, eps, dt, relabel, m_pow):
    """Apply one step per row of xi; return the final z and sum of phi_m over the visited states."""
    acc = 0.0
    for t in range(xi.shape[0]):
        z = _wf_step_core(z, xi[t], theta, alpha, eps, dt, relabel)
        if np.isnan(z[0]):
            return z, acc
        s = 0.0
        for i in range(z.size):
            s += z[i] ** m_pow
        acc += s
    return z, acc


def _z(z: SimplexPoint | np.ndarray) -> np.ndarray:
    return z.z if isinstance(z, SimplexPoint) else np.asarray(z, dtype=np.float64)


def mutation_rate(i: int, j: int, z: SimplexPoint, cfg: WfConfig) -> float:
    """q_ij(z) for 1-based labels i != j, taking j literally as the target label."""
    if i == j:
        raise ValueError("mutation_rate is defined for i != j")
    n, eps, p = cfg.n, cfg.eps, cfg.params
    zi = _z(z)[i - 1]
    br = float(_bracket(np.array([zi]), eps)[0])
    return p.theta / (n - 1) + 2.0 * p.alpha * j / (zi * n * (n + 1.0)) * br


def build_rate_matrix(z: SimplexPoint, cfg: WfConfig) -> RateMatrix:
    zz = _z(z)
    n, eps, p = cfg.n, cfg.eps, cfg.params
    lab = _labels(zz, cfg.relabel)
    br = _bracket(zz, eps)
    q = p.theta / (n - 1) + (2.0 * p.alpha / (n * (n + 1.0))) * np.outer(br / zz, lab)
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return RateMatrix(q)


def drift_from_rates(z: SimplexPoint, cfg: WfConfig) -> np.ndarray:
    """b_i = sum_{j != i} q_ji z_j - sum_{j != i} q_ij z_i."""
    zz = _z(z)
    q = np.array(build_rate_matrix(z, cfg).q)
    np.fill_diagonal(q, 0.0)
    return q.T @ zz - q.sum(axis=1) * zz


def drift_closed_form(z: SimplexPoint, cfg: WfConfig) -> np.ndarray:
    p = cfg.params
    return _drift(_z(z), p.theta, p.alpha, cfg.eps, cfg.relabel)


def drift_one_parameter(z, theta: float) -> np.ndarray:
    """Drift of the symmetric-mutation model, theta (1 - z_i)/(n - 1) - theta z_i."""
    zz = _z(z)
    return theta * (1.0 - zz) / (zz.size - 1) - theta * zz


def covariance(z: SimplexPoint, cfg: WfConfig) -> np.ndarray:
    """a_ij = (z_i - eps)(delta_ij (1 - n eps) - (z_j - eps))."""
    w = _z(z) - cfg.eps
    return np.diag(w * (1.0 - cfg.n * cfg.eps)) - np.outer(w, w)


def wf_covariance_plain(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return np.diag(y) - np.outer(y, y)


def wf_step(z: SimplexPoint, cfg: WfConfig, rng: np.random.Generator) -> SimplexPoint:
    """Euler step z + b/2 dt + sigma sqrt(dt) xi, projected back onto the floored simplex."""
    p = cfg.params
    out = _wf_step_core(_z(z), rng.standard_normal(cfg.n), p.theta, p.alpha, cfg.eps, cfg.dt, cfg.relabel)
    if np.isnan(out[0]):
        raise ProjectionFailure("no feasible projection onto the floored simplex")
    return SimplexPoint(out, cfg.eps)


def limit_drift_gap(z: SimplexPoint, cfg: WfConfig, m: int) -> float:
    """|sum_i b_i d(phi_m)/dz_i - (-sum_i (theta z_i + alpha) d(phi_m)/dz_i)|."""
    if m < 3:
        raise ValueError("the diagnostic uses phi_m with m >= 3")
    zz = _z(z)
    grad = m * zz ** (m - 1)
    b = drift_closed_form(z, cfg)
    target = -np.sum((cfg.params.theta * zz + cfg.params.alpha) * grad)
    return float(abs(np.dot(b, grad) - target))


def initial_point(cfg: WfConfig, rng: np.random.Generator) -> SimplexPoint:
    """PD(theta, alpha) truncated to n types, lifted into the floored simplex."""
    return SimplexPoint.lift(pd_top(cfg.params, cfg.n, rng), cfg.eps)


@dataclass(frozen=True)
class WfRun:
    path: PathRecord
    final: SimplexPoint
    phi_average: float  # time average of phi_m(rho_n(Z)) over steps after burn-in
    steps_averaged: int


def wf_simulate(cfg: WfConfig, horizon: float, record_dt: float, rng: np.random.Generator,
                z0: SimplexPoint | None = None, burn_in: float = 0.0, m: int = 2) -> WfRun:
    """Iterate :func:`wf_step`, recording ordered points every record_dt.

    Noise is drawn in blocks of rows of n standard normals, which consumes the
    generator exactly as repeated wf_step calls would.
    """
    if horizon < 0 or record_dt <= 0:
        raise ValueError("need horizon >= 0 and record_dt > 0")
    p = cfg.params
    z = (initial_point(cfg, rng) if z0 is None else z0).z.copy()
    times = np.arange(0.0, horizon + 1e-12, record_dt)
    rec_steps = np.floor(times / cfg.dt + 1e-9).astype(np.int64)
    total = int(round(horizon / cfg.dt))
    burn = int(round(burn_in / cfg.dt))
    values: list[OrderedPoint] = [order_map(z)] if rec_steps[0] == 0 else []
    acc, counted, done, j = 0.0, 0, 0, int(rec_steps[0] == 0)
    boundaries = sorted(set(rec_steps[j:].tolist()) | {burn, total})
    for target in boundaries:
        if target > total:
            break
        while done < target:
            m_steps = min(_NOISE_CHUNK, target - done)
            xi = rng.standard_normal((m_steps, cfg.n))
            z, a = _wf_advance(z, xi, p.theta, p.alpha, cfg.eps, cfg.dt, cfg.relabel, float(m))
            if np.isnan(z[0]):
                raise ProjectionFailure("no feasible projection onto the floored simplex")
            if done >= burn:
                acc += a
                counted += m_steps
            done += m_steps
        while j < rec_steps.size and rec_steps[j] == done:
            values.append(order_map(z))
            j += 1
    times = times[: len(values)]
    avg = acc / counted if counted else float("nan")
    return WfRun(PathRecord(times, values), SimplexPoint(z, cfg.eps), avg, counted)


def wf_run(cfg: WfConfig, horizon: float, record_dt: float, rng: np.random.Generator,
           z0: SimplexPoint | None = None) -> PathRecord:
    return wf_simulate(cfg, horizon, record_dt, rng, z0).path
