"""The acceptance checks, runnable from Python, the CLI and the test suite.

Every check draws from ``make_rng(seed, check_id, cell, chunk)`` and merges
chunk results in chunk order, so a result never depends on the thread count.
Details are plain JSON values; nothing time-dependent is recorded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats as sps

from .core import Params, SimplexPoint, chunk_sizes, make_rng, parallel_map, phi_m
from .chains import k_run_rescaled
from .diversity_sde import euler_paths, exact_transition_many, transition_mean, transition_var
from .samplers import TruncationOverflow, sample_gem_sticks, sample_pd
from .stats import (coincidence_moment, expected_k, ks_test, ks_two_sample, mc_estimate,
                    poisson_fit, urn_replicates, variance_estimate)
from .wf_diffusion import (WfConfig, drift_closed_form, drift_from_rates, initial_point,
                           limit_drift_gap, wf_simulate)

GRID = [(theta, alpha) for theta in (0.5, 1.0, 5.0) for alpha in (0.1, 0.5, 0.9)]


@dataclass(frozen=True)
class Profile:
    name: str
    gem_draws: int = 100_000
    pd_draws: int = 100_000
    urn_reps: int = 10_000
    urn_n: int = 1_000
    alpha0_n: int = 10_000
    alpha0_reps: int = 10_000
    chain_n: int = 2_000
    chain_reps: int = 5_000
    sde_samples: int = 5_000
    boundary_paths: int = 1_000
    absorb_horizon: float = 50.0
    drift_points: int = 100
    gap_points: int = 20
    wf_horizon: float = 100.0
    wf_burn_in: float = 10.0
    skip: frozenset = field(default_factory=frozenset)


PROFILES = {
    "desk": Profile("desk"),
    "fast": Profile("fast", skip=frozenset({5, 10})),
    "smoke": Profile(
        "smoke", gem_draws=2_000, pd_draws=2_000, urn_reps=400, urn_n=200, alpha0_n=1_000,
        alpha0_reps=400, chain_n=200, chain_reps=300, sde_samples=400, boundary_paths=100,
        absorb_horizon=5.0, drift_points=10, gap_points=3, wf_horizon=1.0, wf_burn_in=0.2,
        skip=frozenset({11})),
}


@dataclass(frozen=True)
class CheckResult:
    id: int
    name: str
    passed: bool
    details: dict

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.id:>2} {self.name}"

    def as_dict(self) -> dict:
        return {"id": self.id, "name": self.name, "passed": self.passed, "details": self.details}


def _f(x) -> float:
    return float(x)


def _chunked(total: int, chunk: int, fn, threads):
    """Apply fn(stream, size) to fixed-size chunks and return the ordered results."""
    return parallel_map(lambda item: fn(*item), enumerate(chunk_sizes(total, chunk)), threads)


def check_stick_marginal(seed: int, prof: Profile, threads=None) -> CheckResult:
    cells = []
    for c, (theta, alpha) in enumerate(GRID):
        p = Params(theta, alpha)
        parts = _chunked(prof.gem_draws, 25_000,
                         lambda s, size: sample_gem_sticks(p, 1, size, make_rng(seed, 1, c, s))[0][:, 0],
                         threads)
        ks = ks_test(np.concatenate(parts), lambda x: sps.beta.cdf(x, 1 - alpha, theta + alpha))
        cells.append({"theta": theta, "alpha": alpha, "ks": _f(ks.statistic),
                      "threshold": _f(ks.threshold), "passed": ks.passed})
    return CheckResult(1, "stick-break marginal", all(x["passed"] for x in cells), {"cells": cells})


def check_pd_moment(seed: int, prof: Profile, threads=None) -> CheckResult:
    chunk = 5_000
    cells = []
    for c, (theta, alpha) in enumerate(GRID):
        p = Params(theta, alpha)

        def work(s, size, p=p, c=c):
            rng = make_rng(seed, 2, c, s)
            out = np.empty(size)
            for r in range(size):
                try:
                    out[r] = phi_m(sample_pd(p, 1e-10, rng), 2)
                except TruncationOverflow as err:
                    return {"overflow_sticks": int(err.sticks), "residual": _f(err.residual)}
            return out

        sizes = chunk_sizes(prof.pd_draws, chunk)
        # the first chunk decides cheaply whether the truncation is reachable at all
        parts = [work(0, sizes[0])]
        if not isinstance(parts[0], dict):
            parts += parallel_map(lambda item: work(item[0] + 1, item[1]), enumerate(sizes[1:]), threads)
        failed = next((x for x in parts if isinstance(x, dict)), None)
        target = coincidence_moment(p)
        cell = {"theta": theta, "alpha": alpha, "target": _f(target)}
        if failed is not None:
            cell.update(failed, passed=False, error="TruncationOverflow")
        else:
            est = mc_estimate(np.concatenate(parts))
            cell.update(mean=_f(est.mean), se=_f(est.std_error), z=_f(est.z_score(target)),
                        passed=est.within(target))
        cells.append(cell)
    return CheckResult(2, "PD moment", all(x["passed"] for x in cells), {"cells": cells})


def check_urn_count(seed: int, prof: Profile, threads=None) -> CheckResult:
    cells = []
    for c, (theta, alpha) in enumerate(GRID):
        p = Params(theta, alpha)
        ks, _ = urn_replicates(p, prof.urn_n, prof.urn_reps, _cell_seed(seed, 3, c), threads=threads)
        est = mc_estimate(ks)
        target = expected_k(p, prof.urn_n)
        cells.append({"theta": theta, "alpha": alpha, "mean": _f(est.mean), "se": _f(est.std_error),
                      "target": _f(target), "z": _f(est.z_score(target)), "passed": est.within(target)})
    return CheckResult(3, "urn species count", all(x["passed"] for x in cells),
                       {"n": prof.urn_n, "cells": cells})


def _cell_seed(seed: int, check: int, cell: int) -> int:
    """A 64-bit seed for helpers that take a plain seed and spawn their own chunk streams."""
    return int(make_rng(seed, check, cell).integers(0, 2**63))


def check_alpha_zero(seed: int, prof: Profile, threads=None) -> CheckResult:
    n = prof.alpha0_n
    cells = []
    for c, theta in enumerate((0.5, 1.0, 2.0)):
        p = Params(theta, 0.0)
        ks, m1 = urn_replicates(p, n, prof.alpha0_reps, _cell_seed(seed, 4, c), threads=threads)
        fit = poisson_fit(m1, theta)
        est = mc_estimate(ks / math.log(n))
        target = expected_k(p, n) / math.log(n)
        cells.append({"theta": theta, "chi2": _f(fit.chi2), "dof": fit.dof, "p_value": _f(fit.p_value),
                      "poisson_passed": fit.passed, "k_over_log_n": _f(est.mean), "se": _f(est.std_error),
                      "target": _f(target), "mean_passed": est.within(target),
                      "passed": fit.passed and est.within(target)})
    return CheckResult(4, "alpha=0 limits", all(x["passed"] for x in cells), {"n": n, "cells": cells})


def check_chain_to_diffusion(seed: int, prof: Profile, threads=None) -> CheckResult:
    p, n, reps = Params(1.0, 0.5), prof.chain_n, prof.chain_reps
    k0 = math.ceil(0.5 * n ** p.alpha)

    def chain(s, size):
        rng = make_rng(seed, 5, 0, s)
        return np.array([k_run_rescaled(p, n, 1.0, "markovized", rng, k0=k0, points=2).values[-1]
                         for _ in range(size)])

    chain_end = np.concatenate(_chunked(reps, 250, chain, threads))
    exact = exact_transition_many(np.full(reps, 0.5), p, 1.0, make_rng(seed, 5, 1))
    d = ks_two_sample(chain_end, exact)
    return CheckResult(5, "chain to diffusion", d < 0.05,
                       {"n": n, "k0": k0, "replicates": reps, "ks": _f(d), "threshold": 0.05,
                        "chain_mean": _f(chain_end.mean()), "exact_mean": _f(exact.mean())})


def _euler_bundle(seed: int, check: int, cell: int, s0, p, dt, t, paths, threads, chunk=250):
    parts = _chunked(paths, chunk, lambda s, size: euler_paths(s0, p, dt, t, size,
                                                               make_rng(seed, check, cell, s)), threads)
    return (np.concatenate([x.terminal for x in parts]), np.concatenate([x.minimum for x in parts]),
            np.concatenate([x.absorbed for x in parts]))


def check_sde_consistency(seed: int, prof: Profile, threads=None) -> CheckResult:
    p, s0, m = Params(1.0, 0.5), 0.5, prof.sde_samples
    exact = exact_transition_many(np.full(m, s0), p, 1.0, make_rng(seed, 6, 0))
    euler, _, _ = _euler_bundle(seed, 6, 1, s0, p, 1e-4, 1.0, m, threads)
    d = ks_two_sample(exact, euler)
    mean_t, var_t = transition_mean(s0, p, 1.0), transition_var(s0, p, 1.0)
    moments = {}
    ok = d < 0.03
    for label, x in (("exact", exact), ("euler", euler)):
        me, ve = mc_estimate(x), variance_estimate(x)
        moments[label] = {"mean": _f(me.mean), "mean_se": _f(me.std_error),
                          "var": _f(ve.mean), "var_se": _f(ve.std_error)}
        ok = ok and me.within(mean_t) and ve.within(var_t)
    return CheckResult(6, "SDE internal consistency", ok,
                       {"ks": _f(d), "threshold": 0.03, "mean_target": _f(mean_t), "var_target": _f(var_t),
                        **moments})


def check_boundary(seed: int, prof: Profile, threads=None) -> CheckResult:
    paths, dt = prof.boundary_paths, 1e-4
    term, _, absorbed = _euler_bundle(seed, 7, 0, 0.5, Params(-0.1, 0.5), dt, prof.absorb_horizon,
                                      paths, threads)
    frozen = bool(np.all(term[absorbed] == 0.0))
    absorbing_ok = bool(absorbed.all()) and frozen
    _, low, _ = _euler_bundle(seed, 7, 1, 0.5, Params(0.6, 0.5), dt, 1.0, paths, threads)
    dip = float(np.mean(low < 1e-4))
    return CheckResult(7, "boundary behaviour", absorbing_ok and dip < 0.01,
                       {"absorbed_fraction": _f(absorbed.mean()), "absorbed_frozen": frozen,
                        "horizon": prof.absorb_horizon, "absorbing_passed": absorbing_ok,
                        "entrance_dip_fraction": dip, "entrance_passed": dip < 0.01, "paths": paths})


def check_drift_equivalence(seed: int, prof: Profile, threads=None) -> CheckResult:
    p = Params(1.0, 0.5)
    cells = []
    for c, n in enumerate((5, 50, 500)):
        cfg = WfConfig(n, p)
        rng = make_rng(seed, 8, c)
        worst, signs_ok = 0.0, True
        for _ in range(prof.drift_points):
            z = SimplexPoint.lift(rng.dirichlet(np.ones(n)), cfg.eps)
            worst = max(worst, float(np.max(np.abs(drift_from_rates(z, cfg) - drift_closed_form(z, cfg)))))
            # a face point with a random set of coordinates on the floor
            y = rng.dirichlet(np.ones(n))
            on_floor = rng.permutation(n)[: rng.integers(1, n)]
            y[on_floor] = 0.0
            face = SimplexPoint.lift(y, cfg.eps)
            idx = np.flatnonzero(face.z == cfg.eps)
            signs_ok &= bool(np.all(drift_closed_form(face, cfg)[idx] > 0))
            i = int(rng.integers(n))
            y = np.zeros(n)
            y[i] = 1.0
            vertex = SimplexPoint.lift(y, cfg.eps)
            signs_ok &= bool(drift_closed_form(vertex, cfg)[i] < 0)
        cells.append({"n": n, "max_abs_diff": worst, "signs_passed": signs_ok,
                      "passed": worst <= 1e-10 and signs_ok})
    return CheckResult(8, "drift equivalence", all(x["passed"] for x in cells), {"cells": cells})


def check_limit_drift_gap(seed: int, prof: Profile, threads=None) -> CheckResult:
    p, sizes = Params(1.0, 0.5), (10, 100, 1000)
    rng = make_rng(seed, 9, 0)
    points = []
    for _ in range(prof.gap_points):
        w, _ = sample_gem_sticks(p, 20 * sizes[-1], 1, rng)
        ranked = -np.sort(-w[0])
        gaps = []
        for n in sizes:
            cfg = WfConfig(n, p)
            top = ranked[:n] / ranked[:n].sum()
            gaps.append(limit_drift_gap(SimplexPoint.lift(top, cfg.eps), cfg, 3))
        points.append({"gaps": [_f(g) for g in gaps], "decreasing": bool(gaps[0] > gaps[1] > gaps[2])})
    return CheckResult(9, "limit drift gap", all(x["decreasing"] for x in points),
                       {"n": list(sizes), "points": points})


def check_wf_stationarity(seed: int, prof: Profile, threads=None) -> CheckResult:
    n, eps = 50, 50.0 ** -1.2
    combos = [(1.0, 0.0), (1.0, 0.3), (2.0, 0.5)]

    def one(item):
        c, (theta, alpha) = item
        p = Params(theta, alpha)
        cfg = WfConfig(n, p, eps=eps, dt=1e-4)
        rng = make_rng(seed, 10, c)
        run = wf_simulate(cfg, prof.wf_horizon, prof.wf_horizon, rng, z0=initial_point(cfg, rng),
                          burn_in=prof.wf_burn_in, m=2)
        target = coincidence_moment(p)
        rel = abs(run.phi_average - target) / target
        return {"theta": theta, "alpha": alpha, "time_average": _f(run.phi_average),
                "target": _f(target), "relative_error": _f(rel), "passed": rel <= 0.10}

    cells = parallel_map(one, enumerate(combos), threads)
    return CheckResult(10, "WF stationarity proxy", all(x["passed"] for x in cells),
                       {"n": n, "eps": eps, "horizon": prof.wf_horizon, "burn_in": prof.wf_burn_in,
                        "cells": cells})


def check_determinism(seed: int, prof: Profile, threads=None) -> CheckResult:
    """Rerun the smoke suite with two thread counts and compare the serialised reports."""
    from .cli import render_report

    smoke = PROFILES["smoke"]
    a = render_report(run_all(seed, smoke, threads=1), seed, smoke.name)
    b = render_report(run_all(seed, smoke, threads=4), seed, smoke.name)
    return CheckResult(11, "determinism", a == b,
                       {"profile": smoke.name, "threads": [1, 4], "bytes": len(a.encode()), "identical": a == b})


CHECKS: dict[int, tuple[str, Callable]] = {
    1: ("stick-marginal", check_stick_marginal),
    2: ("pd-moment", check_pd_moment),
    3: ("urn-count", check_urn_count),
    4: ("alpha-zero", check_alpha_zero),
    5: ("chain-diffusion", check_chain_to_diffusion),
    6: ("sde-consistency", check_sde_consistency),
    7: ("boundary", check_boundary),
    8: ("drift-equivalence", check_drift_equivalence),
    9: ("limit-drift-gap", check_limit_drift_gap),
    10: ("wf-stationarity", check_wf_stationarity),
    11: ("determinism", check_determinism),
}
SLOW = frozenset({5, 10})


def resolve_check(key) -> int:
    """Accept a number ("7") or a slug ("boundary")."""
    s = str(key).strip().lower()
    if s.isdigit() and int(s) in CHECKS:
        return int(s)
    for cid, (slug, _) in CHECKS.items():
        if s == slug:
            return cid
    raise KeyError(f"unknown check {key!r}; choose from {sorted(CHECKS)} or {[v[0] for v in CHECKS.values()]}")


def get_profile(profile: str | Profile) -> Profile:
    if isinstance(profile, Profile):
        return profile
    try:
        return PROFILES[profile]
    except KeyError:
        raise KeyError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}") from None


def run_check(check, seed: int, profile: str | Profile = "desk", threads=None) -> CheckResult:
    cid = resolve_check(check)
    return CHECKS[cid][1](seed, get_profile(profile), threads)


def run_all(seed: int, profile: str | Profile = "desk", threads=None, progress=None) -> list[CheckResult]:
    prof = get_profile(profile)
    out = []
    for cid in sorted(CHECKS):
        if cid in prof.skip:
            continue
        res = CHECKS[cid][1](seed, prof, threads)
        if progress is not None:
            progress(res)
        out.append(res)
    return out
