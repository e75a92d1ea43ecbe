import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst
from scipy import special

from semisup import binary as bn
from semisup import dcor
from semisup import stochastics as st
from semisup.errors import InvalidParameterError

MIX = bn.DirichletMixture(0.5, (4, 1, 1, 1), (1, 1, 1, 4))
LABELED = ((3, 1), (2, 5))

# p*(m = (30, 10)) - p*(m = (0, 0)) for MIX, LABELED, x* = 1, computed once by
# the quadrature path and frozen.
PINNED_SHIFT = -0.05054512676582701


def beta_factor_oracle(prior: bn.DirichletMixture, data: bn.CountData, x_star: int) -> float:
    """Each Dirichlet component factors into independent Betas for theta, phi0, phi1.

    The posterior is then a two-term mixture with weights from Beta-function
    ratios, giving p* without any binomial expansion or quadrature.
    """
    (n00, n01), (n10, n11) = data.labeled
    m0, m1 = data.unlabeled
    logw, means = [], []
    for weight, (a00, a01, a10, a11) in ((prior.a, prior.dir0), (1 - prior.a, prior.dir1)):
        lw = math.log(weight)
        lw += special.betaln(a10 + a11 + n10 + n11 + m1, a00 + a01 + n00 + n01 + m0) - special.betaln(a10 + a11, a00 + a01)
        lw += special.betaln(a11 + n11, a10 + n10) - special.betaln(a11, a10)
        lw += special.betaln(a01 + n01, a00 + n00) - special.betaln(a01, a00)
        logw.append(lw)
        means.append((a11 + n11) / (a10 + a11 + n10 + n11) if x_star else (a01 + n01) / (a00 + a01 + n00 + n01))
    w = np.exp(np.array(logw) - special.logsumexp(logw))
    return float(w @ np.array(means))


# --------------------------------------------------------------------------
# Closed forms


def test_product_beta_example():
    data = bn.CountData(((0, 0), (1, 3)), (7, 2))
    assert bn.posterior_predictive(bn.ProductBeta(), data, 1).p_star == pytest.approx(2 / 3, abs=1e-15)


def test_no_data_gives_prior_mean():
    assert bn.posterior_predictive(bn.ProductBeta(phi1=(2, 6)), bn.CountData(), 1).p_star == pytest.approx(0.25)
    assert bn.posterior_predictive(bn.Dirichlet((1, 3, 2, 2)), bn.CountData(), 0).p_star == pytest.approx(0.75)
    mix = bn.posterior_predictive(MIX, bn.CountData(), 1).p_star
    assert mix == pytest.approx(0.5 * 0.5 + 0.5 * 0.8)


def test_closed_forms_on_random_grid():
    rng = np.random.default_rng(11)
    for _ in range(200):
        lab = rng.integers(0, 30, size=(2, 2))
        unl = rng.integers(0, 50, size=2)
        x = int(rng.integers(2))
        pb = bn.ProductBeta(tuple(rng.uniform(0.1, 5, 2)), tuple(rng.uniform(0.1, 5, 2)), tuple(rng.uniform(0.1, 5, 2)))
        a, b = pb.phi1 if x else pb.phi0
        expect = (a + lab[x, 1]) / (a + b + lab[x].sum())
        data = bn.CountData(lab.tolist(), unl.tolist())
        assert abs(bn.posterior_predictive(pb, data, x).p_star - expect) <= 1e-12
        alpha = rng.uniform(0.1, 5, 4)
        post = alpha + lab.ravel()
        expect = post[2 * x + 1] / (post[2 * x] + post[2 * x + 1])
        assert abs(bn.posterior_predictive(bn.Dirichlet(tuple(alpha)), data, x).p_star - expect) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(hst.lists(hst.integers(0, 40), min_size=4, max_size=4), hst.lists(hst.integers(0, 200), min_size=2, max_size=2),
       hst.integers(0, 1))
def test_unlabeled_counts_ignored_without_coupling(lab, unl, x):
    lab = (tuple(lab[:2]), tuple(lab[2:]))
    for prior in (bn.ProductBeta((2, 3), (1, 4), (5, 5)), bn.Dirichlet((0.5, 2, 1, 3))):
        a = bn.posterior_predictive(prior, bn.CountData(lab, unl), x).p_star
        b = bn.posterior_predictive(prior, bn.CountData(lab, (0, 0)), x).p_star
        assert a == b


@settings(max_examples=100, deadline=None)
@given(hst.lists(hst.integers(0, 40), min_size=4, max_size=4), hst.integers(0, 1))
def test_product_beta_monotone_in_successes(lab, x):
    prior = bn.ProductBeta((2, 3), (1, 4), (5, 5))
    base = [list(lab[:2]), list(lab[2:])]
    more = [row[:] for row in base]
    more[x][1] += 1
    assert bn.posterior_predictive(prior, bn.CountData(more), x).p_star >= bn.posterior_predictive(
        prior, bn.CountData(base), x).p_star


# --------------------------------------------------------------------------
# Dirichlet mixture


@pytest.mark.parametrize("unl", [(0, 0), (30, 10), (10, 30), (0, 64), (5, 5)])
@pytest.mark.parametrize("x", [0, 1])
def test_mixture_exact_matches_beta_oracle(unl, x):
    data = bn.CountData(LABELED, unl)
    pred = bn.posterior_predictive(MIX, data, x)
    assert pred.method == "exact"
    assert pred.p_star == pytest.approx(beta_factor_oracle(MIX, data, x), abs=1e-12)


@pytest.mark.parametrize("unl", [(40, 40), (200, 30), (1000, 3000)])
def test_mixture_quadrature_matches_beta_oracle(unl):
    data = bn.CountData(LABELED, unl)
    pred = bn.posterior_predictive(MIX, data, 1)
    assert pred.method == "quadrature"
    assert pred.diagnostics["max_relative_change"] <= 1e-6
    assert pred.p_star == pytest.approx(beta_factor_oracle(MIX, data, 1), abs=1e-10)


def test_exact_and_quadrature_agree_where_both_apply():
    rng = np.random.default_rng(12)
    for _ in range(30):
        prior = bn.DirichletMixture(float(rng.uniform(0.05, 0.95)), tuple(rng.uniform(0.3, 6, 4)), tuple(rng.uniform(0.3, 6, 4)))
        data = bn.CountData(rng.integers(0, 15, (2, 2)).tolist(), rng.integers(0, 32, 2).tolist())
        x = int(rng.integers(2))
        exact = bn.posterior_predictive(prior, data, x)
        quad = bn.posterior_predictive(prior, data, x, expansion_cap=-1)
        assert exact.method == "exact" and quad.method == "quadrature"
        assert abs(exact.p_star - quad.p_star) <= 1e-6 * abs(exact.p_star)


def test_identical_components_ignore_unlabeled():
    prior = bn.DirichletMixture(0.3, (2, 1, 3, 1), (2, 1, 3, 1))
    base = bn.posterior_predictive(prior, bn.CountData(LABELED, (0, 0)), 1).p_star
    for unl in [(1, 0), (30, 10), (64, 0), (300, 500)]:
        assert abs(bn.posterior_predictive(prior, bn.CountData(LABELED, unl), 1).p_star - base) <= 1e-12


def test_distinct_components_shift_pinned():
    q = lambda unl: bn.posterior_predictive(MIX, bn.CountData(LABELED, unl), 1, expansion_cap=-1).p_star  # noqa: E731
    assert q((30, 10)) - q((0, 0)) == pytest.approx(PINNED_SHIFT, abs=1e-12)
    e = lambda unl: bn.posterior_predictive(MIX, bn.CountData(LABELED, unl), 1).p_star  # noqa: E731
    assert e((30, 10)) - e((0, 0)) == pytest.approx(PINNED_SHIFT, abs=1e-12)


def test_quadrature_failure_reports_diagnostics(monkeypatch):
    from semisup.errors import NumericalFailure

    def bad(*args, **kwargs):
        raise NumericalFailure("no convergence", {"max_relative_change": 1.0})

    monkeypatch.setattr(bn, "_mixture_quadrature", bad)
    with pytest.raises(NumericalFailure) as info:
        bn.posterior_predictive(MIX, bn.CountData(LABELED, (100, 100)), 1)
    assert info.value.diagnostics["max_relative_change"] == 1.0


# --------------------------------------------------------------------------
# Conditional weight


def test_weight_limits():
    assert bn.conditional_prior_weight(bn.DirichletMixture(1e-12, (4, 1, 1, 1), (1, 1, 1, 4)), 0.4) < 1e-10
    same = bn.DirichletMixture(0.37, (2, 2, 1, 5), (2, 2, 1, 5))
    for t in (0.01, 0.3, 0.99):
        assert bn.conditional_prior_weight(same, t) == pytest.approx(0.37, abs=1e-14)


def test_weight_boundary_is_error():
    for t in (0.0, 1.0):
        with pytest.raises(InvalidParameterError):
            bn.conditional_prior_weight(MIX, t)


def test_weight_matches_monte_carlo_conditional():
    prior = bn.DirichletMixture(0.5, (1, 1, 1, 1), (2, 2, 2, 2))
    rng = st.make_rng(13)
    n = 1_000_000
    comp0 = rng.random(n) < prior.a
    cells = np.where(comp0[:, None], rng.dirichlet(prior.dir0, n), rng.dirichlet(prior.dir1, n))
    theta = cells[:, 2] + cells[:, 3]
    window = np.abs(theta - 0.3) < 0.005
    frac = comp0[window].mean()
    se = math.sqrt(frac * (1 - frac) / window.sum())
    assert abs(frac - bn.conditional_prior_weight(prior, 0.3)) <= 3 * se


# --------------------------------------------------------------------------
# Prior independence


def test_single_dirichlet_independence_not_rejected():
    res = bn.dirichlet_phi_theta_independence_check((2, 1, 3, 1), 10_000, st.make_rng(14))
    assert not res.reject
    assert res.statistic < res.threshold


def test_separated_mixture_dependence_detected():
    prior = bn.DirichletMixture(0.5, (9, 1, 1, 1), (1, 1, 1, 9))
    res = bn.dirichlet_phi_theta_independence_check(prior, 10_000, st.make_rng(15))
    assert res.reject and res.statistic > res.threshold


def test_mixture_with_equal_theta_marginals_is_independent():
    # both components give theta ~ Beta(10, 10), so theta carries no information
    # about the component and hence none about phi
    prior = bn.DirichletMixture(0.5, (9, 1, 1, 9), (1, 9, 9, 1))
    assert bn.theta_marginal(prior.dir0) == bn.theta_marginal(prior.dir1)
    res = bn.dirichlet_phi_theta_independence_check(prior, 10_000, st.make_rng(15))
    assert not res.reject


def test_constant_input_has_zero_dependence():
    rng = st.make_rng(16)
    assert dcor.distance_correlation_sq(np.full(500, 0.4), rng.random((500, 2))) == pytest.approx(0.0, abs=1e-12)


def test_independence_check_needs_enough_draws():
    with pytest.raises(InvalidParameterError):
        bn.dirichlet_phi_theta_independence_check((1, 1, 1, 1), 100, st.make_rng(0))


# --------------------------------------------------------------------------
# Validation and serialization


@pytest.mark.parametrize("bad", [
    lambda: bn.ProductBeta((0, 1)),
    lambda: bn.Dirichlet((1, 1, 1)),
    lambda: bn.Dirichlet((1, 1, 1, -1)),
    lambda: bn.DirichletMixture(1.0, (1, 1, 1, 1), (1, 1, 1, 1)),
    lambda: bn.CountData(((1, -1), (0, 0))),
    lambda: bn.posterior_predictive(MIX, bn.CountData(), 2),
])
def test_invalid_inputs(bad):
    with pytest.raises(InvalidParameterError):
        bad()


@pytest.mark.parametrize("prior", [bn.ProductBeta((1, 2), (3, 4), (5, 6)), bn.Dirichlet((1, 2, 3, 4)), MIX])
def test_prior_dict_round_trip(prior):
    assert bn.prior_from_dict(bn.prior_to_dict(prior)) == prior
