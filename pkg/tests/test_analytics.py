import math

import numpy as np
import pytest

from cascade_occupancy import laws
from cascade_occupancy.analytics import (build_profile, gamma_tail_sum, m_inverse, mean_fn, numeric_derivatives,
                                         rate_phi, regime_theta, theorem1_constants, var_fn)
from cascade_occupancy.errors import DomainError, RegimeError

import oracles


@pytest.fixture(scope="module")
def pd1():
    return build_profile("pd1")


def test_pd1_profile(pd1):
    assert pd1.theta_lower == 0
    assert abs(pd1.theta_upper - math.e) < 1e-6
    assert abs(pd1.m_lower - 1 / math.e) < 1e-6
    assert pd1.m_upper == math.inf
    t = pd1.grid(64)
    np.testing.assert_allclose(pd1.m(t), 1 / t, atol=1e-9)
    np.testing.assert_allclose(pd1.v(t), 1 / t ** 2, atol=1e-9)
    np.testing.assert_allclose(pd1.phi(t), 1 - np.log(t), atol=1e-9)


def test_dirichlet_theta_star_vs_bisection():
    root = oracles.bisect(oracles.dirichlet21_phi, 1.0, 20.0)
    assert build_profile("dirichlet:2:1").theta_upper == pytest.approx(root, abs=1e-9)


def test_rate_and_mean(pd1):
    assert rate_phi(pd1, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert rate_phi(pd1, math.e) == pytest.approx(0.0, abs=1e-9)
    assert rate_phi(build_profile("dirichlet:2:1"), 1.0) == pytest.approx(0.5, abs=1e-12)
    assert mean_fn(pd1, 2) == pytest.approx(0.5) and var_fn(pd1, 2) == pytest.approx(0.25)
    assert mean_fn(pd1, 0.8) == pytest.approx(1.25) and var_fn(pd1, 0.8) == pytest.approx(1.5625)
    assert mean_fn(build_profile("beta:1:1"), 1.0) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(DomainError):
        rate_phi(pd1, 3.0)
    with pytest.raises(DomainError):
        mean_fn(pd1, 0.0)


def test_m_inverse_examples(pd1):
    assert m_inverse(pd1, 0.5) == pytest.approx(2.0, abs=1e-12)
    assert m_inverse(pd1, 1.25) == pytest.approx(0.8, abs=1e-12)
    d = build_profile("dirichlet:2:1")
    oracle = oracles.bisect(lambda t: 1 / (t + 1) - 1 / 3, 0.01, d.theta_upper)
    assert m_inverse(d, 1 / 3) == pytest.approx(oracle, abs=1e-9)
    with pytest.raises(DomainError):
        m_inverse(pd1, 0.3)


@pytest.mark.parametrize("law", laws.SHIPPED_LAWS)
def test_profile_identities(law):
    p = build_profile(law)
    t = p.grid(20, margin=1e-2)
    np.testing.assert_allclose(p.phi(t), p.log_L(t) + t * p.m(t), atol=1e-9)
    for x in t:
        assert m_inverse(p, float(p.m(x))) == pytest.approx(x, abs=1e-7)


@pytest.mark.parametrize("law", laws.SHIPPED_LAWS)
def test_phi_below_one_over_a(law):
    # phi(m^{-1}(1/a)) <= 1/a with equality only at theta = 1
    p = build_profile(law)
    for t in p.grid(30, margin=1e-2):
        a = 1 / float(p.m(t))
        gap = a ** -1 - float(p.phi(t))
        if abs(t - 1) > 1e-3:
            assert gap > 1e-9
    assert float(p.phi(1.0)) == pytest.approx(float(p.m(1.0)), abs=1e-9)


def test_gamma_tail_sum():
    assert gamma_tail_sum(0.5, 1) == pytest.approx(2 * math.sqrt(math.pi), rel=1e-14)
    assert gamma_tail_sum(2, 3) == pytest.approx(0.25, rel=1e-14)
    direct = sum(1 / (l * (l - 1) * (l - 2)) for l in range(3, 10_001))
    assert direct == pytest.approx(0.25, abs=1e-7)
    assert gamma_tail_sum(0.999, 1) == pytest.approx(math.gamma(0.001) / 0.999, rel=1e-12)
    for t in (0.1, 0.5, 0.9):
        assert gamma_tail_sum(t, 1) == pytest.approx(math.gamma(1 - t) / t, rel=1e-10)
    for t, j in ((0.5, 1), (0.5, 2), (1.5, 2), (2.0, 3), (2.7, 4)):
        assert gamma_tail_sum(t, j) == pytest.approx(oracles.gamma_series(t, j), rel=1e-8)
    with pytest.raises(DomainError):
        gamma_tail_sum(3.0, 3)


def test_theorem1_constants(pd1):
    c = theorem1_constants(pd1, 2.0, 0.0, 3)
    tail, exact = oracles.pd1_heavy_box_constants(2.0, 0.0, 3)
    assert c.tail_constant == pytest.approx(tail, rel=1e-9)
    assert c.exact_j_constant == pytest.approx(exact, rel=1e-9)
    assert c.tail_constant == pytest.approx(0.25 / math.sqrt(math.pi / 2), rel=1e-12)
    assert c.theta == pytest.approx(2.0) and c.phi == pytest.approx(1 - math.log(2))
    c2 = theorem1_constants(pd1, 2.0, 2.0, 3)
    assert c2.tail_constant / c.tail_constant == pytest.approx(math.exp(-2), rel=1e-12)
    c3 = theorem1_constants(pd1, 0.5, 0.0, 1)
    assert c3.tail_constant == pytest.approx(1 / math.sqrt(2), rel=1e-9)
    with pytest.raises(DomainError):
        theorem1_constants(pd1, 2.0, 0.0, 2)
    with pytest.raises(RegimeError):
        regime_theta(pd1, 3.0)


def test_numeric_derivatives():
    d1, d2 = numeric_derivatives(lambda t: 1 / t, 2.0)
    assert d1 == pytest.approx(-0.25, abs=1e-8)
    assert d2 == pytest.approx(0.25, abs=1e-6)
    assert numeric_derivatives(lambda t: 1.0, 1.3) == (0.0, 0.0)
    beta = laws.parse_law("beta:1:1")
    assert numeric_derivatives(lambda t: float(beta.laplace(t)), 1.0)[0] == pytest.approx(-0.5, abs=1e-8)


@pytest.mark.parametrize("law", laws.SHIPPED_LAWS)
def test_finite_difference_mode(law):
    ex, fd = build_profile(law), build_profile(law, mode="finite-difference")
    assert fd.theta_upper == pytest.approx(ex.theta_upper, rel=1e-6)
    t = ex.grid(16, margin=5e-2)
    np.testing.assert_allclose(fd.m(t), ex.m(t), rtol=1e-6)
    np.testing.assert_allclose(fd.v(t), ex.v(t), rtol=1e-5)


def test_monte_carlo_mode():
    p = build_profile("pd1", mode="monte-carlo", mc_replicas=20000, seed=3)
    assert p.theta_upper == pytest.approx(math.e, rel=0.05)
    se = p.m_standard_error(2.0)
    assert abs(float(p.m(2.0)) - 0.5) < 4 * se + 1e-3
    # a edge within the Monte Carlo band is refused
    with pytest.raises(RegimeError):
        regime_theta(p, 1 / p.m_lower * (1 - 1e-6))
