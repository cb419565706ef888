import numpy as np
import pytest
from scipy import stats as sps

from pdlab.core import Params, make_rng, phi_m
from pdlab.samplers import (PartitionState, TruncationOverflow, beta_variates, pd_top, sample_gem,
                            sample_gem_sticks, sample_pd, urn_block_probs, urn_init, urn_new_block_prob,
                            urn_next, urn_run)
from pdlab.stats import coincidence_moment, ks_test, mc_estimate


def test_gem_draw_invariants():
    g = sample_gem(Params(1.0, 0.3), 1e-8, make_rng(1))
    assert np.all(g.weights > 0)
    assert g.weights.sum() + g.residual == pytest.approx(1.0, abs=1e-12)
    assert g.residual < 1e-8
    assert g.K == g.weights.size


def test_gem_alpha_zero_sticks_are_beta_1_theta():
    w, _ = sample_gem_sticks(Params(2.0, 0.0), 3, 20_000, make_rng(2))
    fractions = w[:, 1] / (1 - w[:, 0])
    assert ks_test(fractions, lambda x: sps.beta.cdf(x, 1, 2)).passed


def test_beta_small_shapes():
    # mass piles up near 0, where doubles still resolve it; a naive gamma ratio gives 0/0 here
    x = beta_variates(make_rng(3), 0.02, 0.5, 20_000)
    assert np.all(np.isfinite(x)) and np.all(x < 1)
    assert ks_test(x, lambda v: sps.beta.cdf(v, 0.02, 0.5)).passed


def test_truncation_overflow_reports_state():
    with pytest.raises(TruncationOverflow) as err:
        sample_gem(Params(1.0, 0.9), 1e-10, make_rng(4), cap=1000)
    assert err.value.sticks == 1000 and err.value.residual > 1e-10


def test_pd_is_ranked_and_sums_below_one():
    z = sample_pd(Params(1.0, 0.2), 1e-9, make_rng(5))
    assert np.all(np.diff(z.z) <= 0)
    assert 1 - 1e-9 < z.z.sum() <= 1 + 1e-12


def test_pd_moment_at_feasible_truncation():
    # atoms past the cut each weigh less than the residual r, so phi_2 moves by at most r^2
    p = Params(1.0, 0.5)
    rng = make_rng(6)
    est = mc_estimate([phi_m(sample_pd(p, 1e-3, rng), 2) for _ in range(4_000)])
    assert est.within(coincidence_moment(p))


def test_pd_top_normalised():
    z = pd_top(Params(1.0, 0.5), 50, make_rng(7))
    assert z.size == 50 and z.sum() == pytest.approx(1.0)
    assert np.all(np.diff(z) <= 0)


def test_urn_first_draws():
    p = Params(1.0, 0.5)
    s = urn_init()
    assert s.K == 1 and s.n == 1
    assert urn_new_block_prob(s, p) == pytest.approx(1.5 / 2)
    assert urn_block_probs(s, p).sum() + urn_new_block_prob(s, p) == pytest.approx(1.0)


def test_urn_probabilities_sum_to_one():
    s = PartitionState(np.array([4, 2, 1, 1]))
    p = Params(0.7, 0.3)
    assert urn_block_probs(s, p).sum() + urn_new_block_prob(s, p) == pytest.approx(1.0)


def test_urn_next_matches_urn_run():
    p = Params(1.0, 0.5)
    a, b = make_rng(8), make_rng(8)
    s = urn_init()
    for _ in range(199):
        s = urn_next(s, p, a)
    assert np.array_equal(s.block_sizes, urn_run(p, 200, b).block_sizes)


def test_urn_partition_accounting():
    s = urn_run(Params(2.0, 0.4), 500, make_rng(9))
    assert s.n == 500
    assert s.M1 == np.count_nonzero(s.block_sizes == 1)
    assert s.frequencies().z.sum() == pytest.approx(1.0)


def test_urn_n_one_is_single_block():
    assert urn_run(Params(1.0, 0.5), 1, make_rng(0)).K == 1
