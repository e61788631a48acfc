import math

import numpy as np
import pytest
from scipy import integrate, stats

from cascade_occupancy import cascade as C
from cascade_occupancy.analytics import build_profile
from cascade_occupancy.errors import DomainError, RegimeError
from cascade_occupancy.regimes import (RegimeSchedule, ks_distance, regime_n, run_clt, run_growth, run_lln,
                                       run_shatter, run_tilted)


def test_schedule():
    s = RegimeSchedule.build(build_profile("pd1"), 2.0, 0.0, [12, 24])
    assert s.ns == (403, 162755) and s.theta == pytest.approx(2.0)
    assert regime_n(2.0, 0.0, 0) == 1
    assert regime_n(1.0, 0.0, math.log(2.5)) == 3  # half rounds up
    with pytest.raises(ValueError):
        RegimeSchedule.build(build_profile("pd1"), 2.0, 0.0, [5, 3])


def test_gates():
    with pytest.raises(RegimeError):
        run_clt("pd1", 2.0, 0.0, 5, 2)
    with pytest.raises(RegimeError):
        run_growth("pd1", 0.5, [5], 2)
    with pytest.raises(RegimeError):
        run_shatter("pd1", 1, [10], 2)
    with pytest.raises(RegimeError):
        run_lln("pd1", 3.0, 0.0, 4, [10], 2)
    with pytest.raises(DomainError):
        run_lln("pd1", 2.0, 0.0, 2, [10], 2)


def test_ks_distance():
    m = 1000
    q = stats.norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    assert ks_distance(q) <= 0.0005 + 1e-12
    assert ks_distance(np.zeros(100)) == pytest.approx(0.5)
    rng = np.random.default_rng(0)
    d = np.array([ks_distance(rng.standard_normal(m)) for _ in range(300)])
    assert np.mean(d <= 1.63 / math.sqrt(m)) >= 0.97
    with pytest.raises(ValueError):
        ks_distance([])


def test_reports_reproducible():
    a = run_lln("pd1", 2.0, 0.0, 3, [8, 10], 4, seed=5)
    b = run_lln("pd1", 2.0, 0.0, 3, [8, 10], 4, seed=5)
    assert a.to_json() == b.to_json()
    d = a.to_dict()
    assert set(d) == {"config", "per_k", "diagnostics"}
    assert set(d["per_k"][0]) == {"k", "n", "median", "mean", "q25", "q75", "target", "pass"}
    assert not any(math.isnan(e["median"]) for e in d["per_k"])


def test_workers_do_not_change_results():
    a = run_growth("gem:2", 1.5, [6, 8], 6, seed=3)
    b = run_growth("gem:2", 1.5, [6, 8], 6, seed=3, workers=2)
    assert a.to_json() == b.to_json()


def test_lln_b_scaling():
    r0 = run_lln("pd1", 2.0, 0.0, 3, [24], 60, seed=2)
    r2 = run_lln("pd1", 2.0, 2.0, 3, [24], 60, seed=2)
    t0, t2 = r0.per_k[0]["target"], r2.per_k[0]["target"]
    assert t2 / t0 == pytest.approx(math.exp(-2), rel=1e-12)
    s0, s2 = r0.per_k[0]["median"] / t0, r2.per_k[0]["median"] / t2
    assert s2 == pytest.approx(s0, rel=0.25)


def test_growth_n_one():
    rep = run_growth("pd1", 2.0, [0, 1], 3)
    assert rep.per_k[0]["n"] == 1 and rep.per_k[0]["median"] == 1.0


def test_shatter_small_n():
    rep = run_shatter("pd1", 2, [1, 2, 50], 5)
    assert np.all(rep.raw[0]["zeta"] == 1) and np.all(rep.raw[1]["zeta"] == 1)


def test_clt_small():
    rep = run_clt("pd1", 0.8, 0.0, 6, 30, seed=4)
    d = rep.diagnostics
    assert abs(d["z"]["mean"]) < 0.6 and 0.4 < d["z"]["variance"] < 2.0
    assert rep.per_k[0]["target"] == pytest.approx(2 ** 0.8 - 1)


def pd1_expected_mu_ratio(k, a=0.8):
    # E sqrt(k) e^{-phi k} mu(n_k), from the Gamma(k) intensity of -ln p under PD(1)
    th = a
    L = math.log(regime_n(a, 0.0, k))
    f = lambda u: -math.expm1(-math.exp(L - u)) * math.exp((k - 1) * math.log(u) - math.lgamma(k))
    val = integrate.quad(f, 0, L + 20 * math.sqrt(k) + 50, points=[L], limit=500)[0]
    return math.sqrt(k) * math.exp(-(1 - math.log(th)) * k) * val


def test_mean_constant_regime():
    # the limit Gamma(1-theta)/(theta sqrt(2 pi v)) is approached like 1/sqrt(k); at desk scale the
    # simulated ratio is checked against its exact finite-k expectation and for upward drift
    prof = build_profile("pd1")
    th, phi = 0.8, float(prof.phi(0.8))
    limit = math.gamma(1 - th) / (th * math.sqrt(2 * math.pi * prof.v(th)))
    meds = []
    for k in (6, 10):
        n = regime_n(0.8, 0.0, k)
        vals = []
        for r in range(30):
            t = C.expand_mass_tree("pd1", k, 0.1 / n, seed=3, replica=r)
            w = C.martingale_W(t, th, prof)[k].value
            vals.append(math.sqrt(k) * math.exp(-phi * k) * C.occupancy_moments(t, n)[k].mu.estimate / w)
        meds.append(np.median(vals))
        assert meds[-1] == pytest.approx(pd1_expected_mu_ratio(k), rel=0.1)
    assert meds[0] < meds[1] < limit


def test_tilted_small():
    rep = run_tilted("pd1", 2.0, 0.0, 1.0, 8, 20, seed=1)
    assert rep.per_k[0]["target"] == pytest.approx(2 / math.sqrt(2 * math.pi * 0.25))
    assert rep.per_k[0]["median"] == pytest.approx(rep.per_k[0]["target"], rel=0.4)
