import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from muf.distributions import (
    Bernoulli,
    Beta,
    Categorical,
    CBernoulli,
    CGaussianMean,
    CGaussianObs,
    Delta,
    DistributionError,
    Gaussian,
    Mixture,
    NonConjugate,
    Poisson,
    Product,
    Rng,
    Shuffle,
    UndefinedMoment,
    Uniform,
    cdistr_to_mdistr,
    make_conditional,
    make_marginal,
)

finite = st.floats(-50, 50, allow_nan=False)
positive = st.floats(0.05, 50)


def test_gaussian_stats_and_pdf():
    g = Gaussian(1.0, 4.0)
    assert g.stats() == (1.0, 4.0)
    assert g.pdf(1.0) == pytest.approx(1 / math.sqrt(8 * math.pi))


def test_beta_and_bernoulli_stats():
    assert Beta(2, 3).stats() == pytest.approx((0.4, 6 / (25 * 6)))
    assert Bernoulli(0.25).stats() == pytest.approx((0.25, 0.1875))
    assert Bernoulli(0.25).pdf(True) == 0.25
    assert Bernoulli(0.25).pdf(False) == 0.75


def test_invalid_parameters_rejected():
    with pytest.raises(DistributionError):
        Gaussian(0.0, 0.0)
    with pytest.raises(DistributionError):
        Gaussian(0.0, float("nan"))
    with pytest.raises(DistributionError):
        Beta(-1, 1)
    with pytest.raises(DistributionError):
        Bernoulli(1.5)
    with pytest.raises(DistributionError):
        Uniform(1.0, 1.0)


def test_shuffle_has_no_moments():
    with pytest.raises(UndefinedMoment):
        Shuffle((1.0, 2.0)).stats()
    assert Shuffle((1.0, 2.0, 3.0)).pdf((3.0, 1.0, 2.0)) == pytest.approx(1 / 6)
    assert Shuffle((1.0, 2.0)).pdf((1.0, 1.0)) == 0.0


def test_pdfs_integrate_to_one():
    xs = np.linspace(-40, 40, 2**16)
    assert np.trapezoid([Gaussian(3.0, 2.5).pdf(x) for x in xs], xs) == pytest.approx(1, abs=1e-9)
    us = np.linspace(1e-9, 1 - 1e-9, 2**14)
    assert np.trapezoid([Beta(2.5, 4.0).pdf(u) for u in us], us) == pytest.approx(1, abs=1e-6)
    assert sum(Poisson(3.5).pdf(k) for k in range(80)) == pytest.approx(1)


def test_delta_and_categorical():
    assert Delta((1.0, 2)).stats() == ((1.0, 2.0), (0.0, 0.0))
    c = Categorical.from_samples([1.0, 3.0, 3.0])
    m, v = c.stats()
    assert m == pytest.approx(7 / 3)
    assert v == pytest.approx(8 / 9)
    assert c.pdf(3.0) == pytest.approx(2 / 3)


def test_mixture_total_variance():
    mix = Mixture((0.5, 0.5), (Gaussian(0.0, 1.0), Gaussian(2.0, 1.0)))
    assert mix.stats() == pytest.approx((1.0, 2.0))


def test_product_draw_and_stats(rng):
    p = Product((Gaussian(0.0, 1.0), Bernoulli(1.0)))
    x = p.draw(rng)
    assert x[1] is True
    assert p.stats() == ((0.0, 1.0), (1.0, 0.0))


def test_rng_is_deterministic():
    a = [Rng.derive(7, 1, 2).normal(0, 1) for _ in range(2)]
    assert a[0] == a[1]
    assert Rng.derive(7, 1, 2).normal(0, 1) != Rng.derive(7, 1, 3).normal(0, 1)


def test_gaussian_obs_matches_unit_affine():
    prior = Gaussian(0.3, 2.0)
    assert make_marginal(prior, CGaussianObs(0.5)) == make_marginal(prior, CGaussianMean(0.5))
    assert make_conditional(prior, CGaussianObs(0.5), 1.0) == make_conditional(prior, CGaussianMean(0.5), 1.0)


def test_non_conjugate_pairs():
    with pytest.raises(NonConjugate):
        make_marginal(Beta(1, 1), CGaussianMean(1.0))
    with pytest.raises(NonConjugate):
        make_conditional(Gaussian(0, 1), CBernoulli(), True)


def test_cdistr_instantiation():
    assert cdistr_to_mdistr(CGaussianMean(2.0, (3.0, 1.0)), 2.0) == Gaussian(7.0, 2.0)
    assert cdistr_to_mdistr(CBernoulli(), 0.3) == Bernoulli(0.3)


# Frozen quadrature outputs; regenerated with tests/oracles.py.
def test_gaussian_conjugacy_frozen_case():
    z, m, v = oracles.gaussian_gaussian(1.0, 2.0, 0.5, 2.0, -1.0, 3.0)
    assert z == pytest.approx(0.1081467981566805, rel=1e-9)
    assert m == pytest.approx(1.941176470588235, rel=1e-9)
    assert v == pytest.approx(0.1176470588235294, rel=1e-8)
    prior = Gaussian(1.0, 2.0)
    cd = CGaussianMean(0.5, (2.0, -1.0))
    assert make_marginal(prior, cd).pdf(3.0) == pytest.approx(z, rel=1e-9)
    post = make_conditional(prior, cd, 3.0)
    assert (post.mean, post.var) == pytest.approx((m, v), rel=1e-9)


@settings(deadline=None, max_examples=40)
@given(finite, positive, positive, st.floats(-3, 3), finite, st.floats(-3, 3))
def test_gaussian_conjugacy_against_quadrature(m0, v0, var, s, t, zscore):
    prior = Gaussian(m0, v0)
    cd = CGaussianMean(var, (s, t))
    marg = make_marginal(prior, cd)
    y = marg.mean + zscore * math.sqrt(marg.var)
    z, m, v = oracles.gaussian_gaussian(m0, v0, var, s, t, y)
    assert marg.pdf(y) == pytest.approx(z, rel=1e-6)
    post = make_conditional(prior, cd, y)
    assert post.mean == pytest.approx(m, rel=1e-6, abs=1e-6)
    assert post.var == pytest.approx(v, rel=1e-6)


@settings(deadline=None, max_examples=40)
@given(st.floats(1, 20), st.floats(1, 20), st.booleans())
def test_beta_conjugacy_against_quadrature(a, b, outcome):
    z, m, v = oracles.beta_bernoulli(a, b, outcome)
    marg = make_marginal(Beta(a, b), CBernoulli())
    assert marg.pdf(outcome) == pytest.approx(z, rel=1e-6)
    assert make_conditional(Beta(a, b), CBernoulli(), outcome).stats() == pytest.approx((m, v), rel=1e-6)


@settings(deadline=None)
@given(finite, positive, positive, finite)
def test_gaussian_update_shrinks_variance(m0, v0, var, y):
    post = make_conditional(Gaussian(m0, v0), CGaussianObs(var), y)
    assert post.var <= v0
    assert post.var <= var * (1 + 1e-12)


@settings(deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=6), st.integers(0, 2**31))
def test_categorical_draws_stay_in_support(ws, seed):
    if sum(ws) <= 0:
        return
    c = Categorical.from_samples(list(range(len(ws))), ws)
    assert abs(sum(c.weights) - 1) <= 1e-12
    x = c.draw(Rng(seed))
    assert c.pdf(x) > 0
