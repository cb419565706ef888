import numpy as np
import pytest

from pdlab.core import ParamError, Params, SimplexPoint, make_rng, order_map, phi_m
from pdlab.stats import mc_estimate
from pdlab.wf_diffusion import (WfConfig, build_rate_matrix, covariance, drift_closed_form,
                                drift_from_rates, drift_one_parameter, initial_point, limit_drift_gap,
                                mutation_rate, wf_covariance_plain, wf_run, wf_simulate, wf_step)

P = Params(1.0, 0.5)


def random_point(cfg, rng):
    return SimplexPoint.lift(rng.dirichlet(np.ones(cfg.n)), cfg.eps)


def test_config_validation():
    assert WfConfig(10, P).eps == pytest.approx(10 ** -1.1)
    with pytest.raises(ParamError):
        WfConfig(1, P)
    with pytest.raises(ParamError):
        WfConfig(10, P, dt=0.0)
    with pytest.raises(ParamError):
        WfConfig(10, Params(-0.1, 0.5))
    with pytest.raises(ValueError):
        WfConfig(10, P, eps=0.2)


def test_mutation_rate_value():
    cfg = WfConfig(3, P, eps=0.01)
    z = SimplexPoint(np.array([0.5, 0.3, 0.2]), 0.01)
    # theta/(n-1) + 2 alpha j / (z_i n (n+1)) with the bracket equal to 1 at z_i = 0.5
    assert mutation_rate(1, 2, z, cfg) == pytest.approx(0.5 + 2 * 0.5 * 2 / (0.5 * 3 * 4))


def test_mutation_rate_at_floor_is_symmetric_part():
    cfg = WfConfig(4, P, eps=0.01)
    z = SimplexPoint(np.array([0.01, 0.5, 0.29, 0.2]), 0.01)
    assert mutation_rate(1, 3, z, cfg) == pytest.approx(1.0 / 3)


def test_rate_matrix_conservative():
    cfg = WfConfig(20, P)
    q = build_rate_matrix(random_point(cfg, make_rng(1)), cfg).q
    assert np.abs(q.sum(axis=1)).max() < 1e-12
    assert q[~np.eye(20, dtype=bool)].min() >= 0


@pytest.mark.parametrize("n", [5, 50, 200])
def test_drift_forms_agree(n):
    cfg = WfConfig(n, P)
    rng = make_rng(n)
    for _ in range(10):
        z = random_point(cfg, rng)
        assert np.max(np.abs(drift_from_rates(z, cfg) - drift_closed_form(z, cfg))) <= 1e-10


def test_drift_sums_to_zero():
    cfg = WfConfig(30, P)
    assert abs(drift_closed_form(random_point(cfg, make_rng(2)), cfg).sum()) < 1e-12


def test_alpha_zero_reduces_to_one_parameter():
    cfg = WfConfig(12, Params(1.5, 0.0))
    z = random_point(cfg, make_rng(3))
    assert np.allclose(drift_closed_form(z, cfg), drift_one_parameter(z, 1.5), atol=1e-15)


def test_boundary_signs():
    n = 10
    cfg = WfConfig(n, P)
    y = make_rng(4).dirichlet(np.ones(n))
    y[[1, 4]] = 0.0
    z = SimplexPoint.lift(y, cfg.eps)
    b = drift_closed_form(z, cfg)
    assert b[1] > 0 and b[4] > 0
    corner = np.zeros(n)
    corner[7] = 1.0
    assert drift_closed_form(SimplexPoint.lift(corner, cfg.eps), cfg)[7] < 0


def test_covariance_structure():
    cfg = WfConfig(8, P)
    rng = make_rng(5)
    c = 1 - cfg.n * cfg.eps
    for _ in range(100):
        z = random_point(cfg, rng)
        a = covariance(z, cfg)
        assert np.allclose(a, a.T)
        assert np.linalg.eigvalsh(a).min() >= -1e-10
        y = (z.z - cfg.eps) / c
        assert np.allclose(a, c * c * wf_covariance_plain(y), atol=1e-14)
    y = np.zeros(8)
    y[0], y[1] = 0.6, 0.4
    a = covariance(SimplexPoint.lift(y, cfg.eps), cfg)
    assert np.all(a[2] == 0) and np.all(a[:, 2] == 0)


def test_step_stays_in_floored_simplex():
    cfg = WfConfig(10, P, dt=1e-2)
    rng = make_rng(6)
    y = np.zeros(10)
    y[0] = 1.0
    z = SimplexPoint.lift(y, cfg.eps)
    for _ in range(500):
        z = wf_step(z, cfg, rng)
        assert z.z.min() >= cfg.eps and abs(z.z.sum() - 1) <= 1e-12


def test_step_increment_moments():
    cfg = WfConfig(4, P, eps=0.01, dt=1e-4)
    z = SimplexPoint.from_array([0.4, 0.3, 0.2, 0.1], cfg.eps)
    rng = make_rng(7)
    inc = np.array([wf_step(z, cfg, rng).z - z.z for _ in range(100_000)])
    half_b = 0.5 * drift_closed_form(z, cfg) * cfg.dt
    var = np.diag(covariance(z, cfg)) * cfg.dt
    for i in range(4):
        assert mc_estimate(inc[:, i]).within(half_b[i])
        sq = (inc[:, i] - half_b[i]) ** 2
        assert mc_estimate(sq).within(var[i])


def test_simulate_matches_iterated_steps():
    cfg = WfConfig(6, P, dt=1e-3)
    z0 = random_point(cfg, make_rng(8))
    run = wf_simulate(cfg, 0.05, 0.01, make_rng(9), z0=z0)
    rng = make_rng(9)
    z = z0
    for _ in range(50):
        z = wf_step(z, cfg, rng)
    assert np.array_equal(run.final.z, z.z)
    assert np.array_equal(run.path.values[-1].z, order_map(z).z)
    assert len(run.path) == 6


def test_run_records_ordered_points():
    cfg = WfConfig(20, P, dt=1e-3)
    rec = wf_run(cfg, 0.1, 0.02, make_rng(10))
    for z in rec.values:
        assert np.all(np.diff(z.z) <= 0) and z.z.sum() <= 1 + 1e-12


def test_initial_point_in_floored_simplex():
    cfg = WfConfig(50, P)
    z = initial_point(cfg, make_rng(11))
    assert z.z.min() >= cfg.eps and np.all(np.diff(z.z) <= 0)


def test_small_n_stationary_mean_matches_dirichlet():
    # at alpha = 0 the lifted coordinates are Wright-Fisher with Dirichlet(theta/(n-1)) equilibrium
    n, theta, eps = 3, 1.0, 1e-4
    cfg = WfConfig(n, Params(theta, 0.0), eps=eps, dt=1e-3)
    beta, c = theta / (n - 1), 1 - n * eps
    target = n * eps ** 2 + 2 * eps * c + c * c * (beta + 1) / (n * beta + 1)
    run = wf_simulate(cfg, 400.0, 400.0, make_rng(12), burn_in=5.0)
    assert abs(run.phi_average - target) / target < 0.03


def test_limit_drift_gap_cases():
    cfg = WfConfig(10, P)
    corner = np.zeros(10)
    corner[0] = 1.0
    assert np.isfinite(limit_drift_gap(SimplexPoint.lift(corner, cfg.eps), cfg, 3))
    with pytest.raises(ValueError):
        limit_drift_gap(SimplexPoint.lift(corner, cfg.eps), cfg, 2)


def test_limit_drift_gap_one_parameter_reduction():
    cfg = WfConfig(40, Params(1.0, 0.0))
    z = random_point(cfg, make_rng(13))
    grad = 3 * z.z ** 2
    expected = abs(np.sum(1.0 * (1 - z.z) / 39 * grad))
    assert limit_drift_gap(z, cfg, 3) == pytest.approx(expected, rel=1e-10)


def test_phi_of_lifted_point_bounded():
    cfg = WfConfig(5, P)
    assert phi_m(random_point(cfg, make_rng(14)), 2) <= 1.0
