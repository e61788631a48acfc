import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from cascade_occupancy.errors import InvalidDistribution
from cascade_occupancy.occupancy import (binomial_icdf, mu, mu_bar, poisson_tail, poissonized_throw, sigma2,
                                         stats_from_counts, throw_balls, throw_balls_batch)

import oracles


@given(st.lists(st.floats(1e-9, 1 - 1e-9), min_size=1, max_size=50),
       st.integers(0, 10**7), st.floats(0.0, 1.0))
def test_binomial_icdf_matches_scipy(us, n, p):
    u = np.array(us)
    got = binomial_icdf(u, n, p)
    ref = stats.binom.ppf(u, n, p)
    # quantiles agree except where u sits within rounding of a CDF step
    cdf_lo = stats.binom.cdf(got - 1, n, p)
    cdf_hi = stats.binom.cdf(got, n, p)
    ok = (got == ref) | (np.abs(cdf_lo - u) < 1e-9) | (np.abs(cdf_hi - u) < 1e-9)
    assert ok.all()


def test_binomial_icdf_bulk():
    rng = np.random.default_rng(0)
    u = rng.random(200_000)
    n = rng.integers(0, 200, u.size)
    p = rng.random(u.size)
    assert np.mean(binomial_icdf(u, n, p) == stats.binom.ppf(u, n, p)) > 1 - 1e-4


def test_throw_examples():
    assert throw_balls([1.0], 5, np.random.default_rng(0)).box_counts == {0: 5}
    assert throw_balls([0.5, 0.5], 0, np.random.default_rng(0)).box_counts == {}
    with pytest.raises(InvalidDistribution):
        throw_balls([0.5, 0.6], 3, np.random.default_rng(0))
    c = throw_balls_batch([0.5, 0.5], 2, 100_000, np.random.default_rng(1))
    one = np.mean((c > 0).sum(axis=1) == 1)
    assert abs(one - 0.5) < 3 * math.sqrt(0.25 / 1e5)
    N = (c > 0).sum(axis=1)
    assert abs(N.mean() - 1.5) < 3 * N.std() / math.sqrt(N.size)


@pytest.mark.parametrize("p,n", [([1.0], 3), ([0.5, 0.5], 2), ([0.5, 0.3, 0.2], 4), ([0.7, 0.3], 3),
                                 ([0.2, 0.2, 0.6], 2)])
def test_enumeration_oracle(p, n):
    exact = oracles.occupancy_distribution(p, n)
    R = 200_000
    c = throw_balls_batch(p, n, R, np.random.default_rng(len(p) * 10 + n))
    vecs = np.stack([(c == j).sum(axis=1) for j in range(1, n + 1)], axis=1)
    keys, freq = np.unique(vecs, axis=0, return_counts=True)
    seen = {tuple(k): f / R for k, f in zip(keys.tolist(), freq)}
    for vec, prob in exact.items():
        f = seen.pop(vec, 0.0)
        assert abs(f - prob) <= 4 * math.sqrt(prob * (1 - prob) / R) + 1e-12
    assert not seen


def test_stats_examples():
    s = stats_from_counts({"a": 1, "b": 1})
    assert s.N(1) == 2 and s.Nbar(1) == 0 and s.total == 2
    s = stats_from_counts({"a": 3})
    assert s.N(3) == 1 and s.Nbar(2) == 1 and s.Nbar(0) == 1
    s = stats_from_counts({"a": 2, "b": 1, "c": 1}, J=2)
    assert s.N(1) == 2 and s.N(2) == 1 and s.total == 3


@given(st.lists(st.integers(1, 30), max_size=40), st.integers(1, 10))
def test_stats_invariants(counts, J):
    s = stats_from_counts(counts, J)
    n = sum(counts)
    assert s.n == n
    assert sum(j * s.N(j) for j in range(1, J + 1)) + s.overflow_balls == n
    assert s.total == len(counts)
    assert all(s.Nbar(j) >= s.Nbar(j + 1) for j in range(J - 1))
    for j in range(J):
        assert s.Nbar(j) == sum(1 for c in counts if c > j)


def test_mu_sigma_examples():
    x = 1.7
    assert mu([1.0], x).value == pytest.approx(1 - math.exp(-x), rel=1e-14)
    assert mu_bar([0.5, 0.5], 1, 2.0).value == pytest.approx(2 - 4 * math.exp(-1), rel=1e-13)
    # series route for the same number
    series = 2 * sum(math.exp(-1) / math.factorial(l) for l in range(2, 40))
    assert mu_bar([0.5, 0.5], 1, 2.0).value == pytest.approx(series, rel=1e-13)
    assert mu_bar([1.0], 5, 0.0).value == 0.0
    assert sigma2([1.0], x).value == pytest.approx(math.exp(-x) * (1 - math.exp(-x)) - x * math.exp(-2 * x),
                                                   rel=1e-13)
    assert sigma2([0.5, 0.5], 2.0).value == pytest.approx(2 * math.exp(-1) * (1 - math.exp(-1)) - 2 * math.exp(-2),
                                                          rel=1e-13)
    assert sigma2([0.5, 0.5], 2.0).value == pytest.approx(oracles.hj_mu_sigma2([0.5, 0.5], 2.0)[1], rel=1e-13)
    assert mu_bar([0.5], 0, 1e4, remainder=1e-8).error_bound == pytest.approx(1e-4)


@given(st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=30), st.floats(0.01, 1e4))
def test_sigma2_below_mu(w, x):
    p = np.array(w) / sum(w)
    m, s = mu(p, x).value, sigma2(p, x).value
    assert s <= m * (1 + 1e-12) + 1e-12
    mo, so = oracles.hj_mu_sigma2(p.tolist(), x)
    assert m == pytest.approx(mo, rel=1e-10, abs=1e-12)
    assert s == pytest.approx(so, rel=1e-8, abs=1e-9)


@given(st.integers(0, 6), st.floats(1e-8, 50.0))
def test_poisson_tail(j, y):
    ref = stats.poisson.sf(j, y)
    assert poisson_tail(j, y) == pytest.approx(ref, rel=1e-9, abs=1e-300)


def test_poissonized():
    assert poissonized_throw([1.0], 0.0, np.random.default_rng(0)).box_counts == {}
    rng = np.random.default_rng(2)
    p = np.array([0.5, 0.5])
    Ns = np.array([len(poissonized_throw(p, 4.0, rng).box_counts) for _ in range(20_000)])
    assert abs(Ns.mean() - 2 * (1 - math.exp(-2))) < 3 * Ns.std() / math.sqrt(Ns.size)
    assert Ns.var() <= mu_bar(p, 0, 4.0).value


def test_poissonized_mean_identity():
    p = np.array([0.4, 0.3, 0.2, 0.1])
    x = 6.0
    c = np.random.default_rng(3).poisson(np.broadcast_to(p * x, (100_000, 4)))
    for j in (0, 1, 2):
        nb = (c > j).sum(axis=1)
        assert abs(nb.mean() - mu_bar(p, j, x).value) < 4 * nb.std() / math.sqrt(nb.size)
