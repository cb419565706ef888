import math

import numpy as np
import pytest
from scipy import stats as sps

from pdlab.core import Params, make_rng
from pdlab.diversity_sde import (AlphaZero, SState, UnsupportedRegime, besq_dimension, classify_boundary,
                                 euler_paths, euler_step, exact_transition, exact_transition_many,
                                 generator_apply, markov_generator_error, noncentral_chisquare,
                                 transition_mean, transition_var)
from pdlab.stats import ks_test, mc_estimate, variance_estimate


@pytest.mark.parametrize("theta,alpha,zero,inf,rec", [
    (-0.1, 0.5, "absorbing", "natural_nonattracting", "transient"),
    (0.0, 0.5, "absorbing", "natural_nonattracting", "transient"),
    (0.25, 0.5, "instantaneously_reflecting", "natural_nonattracting", "transient"),
    (0.5, 0.5, "entrance", "natural_nonattracting", "null_recurrent"),
    (1.0, 0.5, "entrance", "natural_attracting", "transient"),
])
def test_boundary_classes(theta, alpha, zero, inf, rec):
    r = classify_boundary(Params(theta, alpha))
    assert (r.at_zero, r.at_infinity, r.recurrence) == (zero, inf, rec)


def test_alpha_zero_has_no_classification():
    with pytest.raises(AlphaZero):
        classify_boundary(Params(1.0, 0.0))


def test_euler_step_is_full_truncation():
    rng = make_rng(1)
    for _ in range(100):
        assert euler_step(SState(0.0), Params(0.25, 0.5), 1e-2, rng).s >= 0
    # from 0 the noise vanishes, so the step is exactly theta dt
    assert euler_step(SState(0.0), Params(0.25, 0.5), 1e-2, rng).s == pytest.approx(0.0025)


def test_absorbed_state_is_frozen():
    x = SState(0.0, absorbed=True)
    assert euler_step(x, Params(-0.1, 0.5), 1e-3, make_rng(2)) is x
    with pytest.raises(ValueError):
        SState(0.1, absorbed=True)


def test_euler_increment_moments():
    p, s, dt = Params(1.0, 0.5), 2.0, 1e-3
    rng = make_rng(3)
    inc = np.array([euler_step(SState(s), p, dt, rng).s - s for _ in range(20_000)])
    assert mc_estimate(inc).within(p.theta * dt)
    assert variance_estimate(inc).within(2 * p.alpha * s * dt)


def test_noncentral_chisquare_against_scipy():
    x = noncentral_chisquare(3.3, 2.5, make_rng(4), 20_000)
    assert ks_test(x, lambda v: sps.ncx2.cdf(v, 3.3, 2.5)).passed
    with pytest.raises(ValueError):
        noncentral_chisquare(0.0, 1.0, make_rng(0), 3)


def test_exact_transition_moments():
    p, s, t = Params(1.0, 0.5), 0.5, 1.0
    x = exact_transition_many(np.full(50_000, s), p, t, make_rng(5))
    assert mc_estimate(x).within(transition_mean(s, p, t))
    assert variance_estimate(x).within(transition_var(s, p, t))
    assert exact_transition(SState(s), p, t, make_rng(5)).s >= 0


def test_exact_transition_from_zero_is_gamma():
    # started at 0, S_t is (alpha t) Gamma(theta / alpha)
    p, t = Params(0.8, 0.5), 2.0
    x = exact_transition_many(np.zeros(20_000), p, t, make_rng(6))
    assert ks_test(x, lambda v: sps.gamma.cdf(v, p.theta / p.alpha, scale=p.alpha * t)).passed


def test_exact_transition_rejects_absorbing_regime():
    with pytest.raises(UnsupportedRegime):
        exact_transition_many(0.5, Params(-0.1, 0.5), 1.0, make_rng(0))
    assert besq_dimension(Params(1.0, 0.5)) == 4.0


def test_absorbed_fraction_follows_hitting_time_law():
    # with theta < 0 the hitting time of 0 is x0 / (2 G), G ~ Gamma(1 - delta/2), x0 = 2 s0 / alpha
    p, s0, t = Params(-0.1, 0.5), 0.5, 2.0
    bundle = euler_paths(s0, p, 1e-3, t, 4000, make_rng(7))
    delta, x0 = besq_dimension(p), 2 * s0 / p.alpha
    prob = sps.gamma.sf(x0 / (2 * t), 1 - delta / 2)
    se = math.sqrt(prob * (1 - prob) / 4000)
    assert abs(bundle.absorbed.mean() - prob) <= 4 * se + 0.01
    assert np.all(bundle.terminal[bundle.absorbed] == 0.0)
    assert np.all(np.isfinite(bundle.absorbed_at[bundle.absorbed]))


def test_entrance_boundary_not_reached_from_zero_start():
    bundle = euler_paths(0.0, Params(1.0, 0.5), 1e-3, 1.0, 200, make_rng(8))
    assert np.all(bundle.terminal > 0) and not bundle.absorbed.any()


def test_generator_on_exponential():
    p = Params(1.0, 0.5)
    for s in (0.0, 0.3, 2.0):
        exact = -p.theta * math.exp(-s) + p.alpha * s * math.exp(-s)
        assert generator_apply(lambda x: math.exp(-x), s, p) == pytest.approx(exact, abs=1e-5)


def test_markov_generator_error_decreases():
    p = Params(1.0, 0.5)
    f = lambda s: math.exp(-s)
    d1 = lambda s: -math.exp(-s)
    grid = np.linspace(0.1, 3.0, 30)
    errs = [markov_generator_error(f, d1, f, p, n, grid) for n in (100, 1_000, 10_000)]
    assert errs[0] > errs[1] > errs[2]
