import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from pdlab.core import Params, make_rng
from pdlab.stats import (McEstimate, TooFewSamples, _poisson_bins, coincidence_moment, expected_k,
                         ks_test, ks_threshold, ks_two_sample, log_diversity_check, mc_estimate,
                         poisson_fit, urn_replicates, variance_estimate)


def test_expected_k_oracles():
    assert expected_k(Params(1.0, 0.0), 2) == pytest.approx(1.5)
    assert expected_k(Params(0.5, 0.5), 2) == pytest.approx(5 / 3)
    assert expected_k(Params(1.0, 0.5), 1) == 1.0


def test_expected_k_one_parameter_harmonic_sum():
    theta, n = 2.0, 300
    exact = sum(theta / (theta + i) for i in range(n))
    assert expected_k(Params(theta, 0.0), n) == pytest.approx(exact)


def test_coincidence_moment():
    assert coincidence_moment(Params(1.0, 0.0)) == 0.5
    assert coincidence_moment(Params(2.0, 0.5)) == pytest.approx(1 / 6)


def test_estimates():
    est = mc_estimate([1.0, 2.0, 3.0, 4.0])
    assert est.mean == 2.5 and est.std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert est.within(2.5) and not est.within(100.0)
    assert McEstimate(1.0, 0.0, 3).z_score(1.0) == 0.0
    v = variance_estimate(make_rng(1).standard_normal(50_000) * 2)
    assert v.within(4.0)


def test_ks_threshold_and_minimum_size():
    assert ks_threshold(10_000) == pytest.approx(0.0163)
    with pytest.raises(TooFewSamples):
        ks_test(np.zeros(10), lambda x: x)


def test_ks_accepts_uniform_rejects_shifted():
    u = make_rng(2).random(5000)
    assert ks_test(u, lambda x: np.clip(x, 0, 1)).passed
    assert not ks_test(u ** 2, lambda x: np.clip(x, 0, 1)).passed


def test_two_sample_ks_ties():
    a = np.array([0.0, 1.0, 1.0, 2.0])
    assert ks_two_sample(a, a) == 0.0
    assert ks_two_sample(np.zeros(5), np.ones(5)) == 1.0
    x, y = make_rng(3).standard_normal(4000), make_rng(4).standard_normal(4000)
    assert ks_two_sample(x, y) == pytest.approx(sps.ks_2samp(x, y).statistic)


@given(st.floats(0.2, 20.0), st.integers(50, 20_000))
def test_poisson_bins_partition_the_line(lam, n):
    edges, probs = _poisson_bins(lam, n)
    assert edges[0][0] == 0 and edges[-1][1] == math.inf
    for (lo, hi), (lo2, _) in zip(edges, edges[1:]):
        assert lo2 == hi + 1
    assert probs.sum() == pytest.approx(1.0)
    if len(edges) > 1:
        assert np.all(probs * n >= 5 - 1e-9)


def test_poisson_fit_accepts_poisson_rejects_geometric():
    rng = make_rng(5)
    assert poisson_fit(rng.poisson(1.0, 5000), 1.0).passed
    assert not poisson_fit(rng.geometric(0.5, 5000) - 1, 1.0).passed


def test_urn_replicates_independent_of_threads():
    a = urn_replicates(Params(1.0, 0.5), 100, 600, seed=6, threads=1)
    b = urn_replicates(Params(1.0, 0.5), 100, 600, seed=6, threads=3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_log_diversity():
    est = log_diversity_check(1.0, 1000, 2000, seed=7)
    assert est.within(expected_k(Params(1.0, 0.0), 1000) / math.log(1000))
    assert log_diversity_check(0.0, 100, 10, seed=0).mean == pytest.approx(1 / math.log(100))
    with pytest.raises(ValueError):
        log_diversity_check(-1.0, 100, 10, seed=0)
