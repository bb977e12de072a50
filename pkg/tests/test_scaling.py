import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abandonq.limits import Generic, Polynomial
from abandonq.primitives import HeavyTrafficParams, PatienceFamily, PrimitiveSpec
from abandonq.scaling import DominatingFamily, check_growth, couple_patience
from abandonq.simulator import SimConfig, simulate, simulate_coupled

QUAD = PatienceFamily.capped(Polynomial([0.0, 0.0, 1.0]))


def test_couple_examples():
    dom = DominatingFamily(QUAD, 1.0, 0.5, sigma_bar=0.5)
    assert dom.cap_level == 1.0
    assert dom.cap(4) == 0.5
    # F^4(d) = 2 d^2 for d <= 1
    out = couple_patience(np.array([0.1, 0.5, 0.6, 3.0]), 4, dom)
    np.testing.assert_array_equal(out, [0.1, 0.5, np.inf, np.inf])
    assert dom.sup(4) == 0.5
    assert dom.scaled(4, 10.0) == 1.0


def test_default_sigma_bar_and_instability():
    dom = DominatingFamily(PatienceFamily.constant_hazard(1.0), 1.0, 0.5)
    assert dom.sigma_bar == pytest.approx(0.5 * (100.0 - 0.5))
    with pytest.raises(ValueError):
        DominatingFamily(PatienceFamily.no_abandonment(), 1.0, 0.5)
    with pytest.raises(ValueError):
        DominatingFamily(QUAD, 1.0, 0.5, sigma_bar=0.0)


@settings(max_examples=50, deadline=None)
@given(d=st.lists(st.floats(0.0, 50.0), min_size=1, max_size=20),
       n=st.sampled_from([1, 4, 100, 10**4]), sigma_bar=st.floats(0.01, 5.0))
def test_coupled_draws_dominate(d, n, sigma_bar):
    dom = DominatingFamily(PatienceFamily.constant_hazard(2.0), 1.0, 0.3, sigma_bar=sigma_bar)
    d = np.asarray(d)
    ds = dom.couple(d, n)
    assert np.all(ds >= d)
    finite = np.isfinite(ds)
    assert np.all(ds[finite] == d[finite])
    x = np.linspace(0, 20, 50)
    assert np.all(dom.cdf(n, x) <= dom.base.cdf(n, x))
    assert np.all(dom.scaled(n, x) <= dom.cap_level + 1e-12)


def test_coupled_draws_follow_capped_law(rng):
    n = 9
    dom = DominatingFamily(QUAD, 1.0, 0.0, sigma_bar=1.5)
    ds = dom.sample(n, rng, 200_000)
    for x in (0.1, 0.3, 0.6, 2.0):
        emp = np.mean(ds <= x)
        exact = float(dom.cdf(n, x))
        assert abs(emp - exact) <= 4 * math.sqrt(exact * (1 - exact) / ds.size) + 1e-12
    assert np.mean(np.isinf(ds)) == pytest.approx(1 - dom.cap(n), abs=0.005)


def test_check_growth_constant_hazard():
    rep = check_growth(PatienceFamily.constant_hazard(1.5), 1.5, 1.0, [1, 100, 10**6])
    assert rep.ok and rep.witness is None
    assert rep.worst_margin >= 0


def test_check_growth_capped_polynomial():
    assert check_growth(QUAD, 1.0, 2.0, [1, 100, 10**4]).ok
    assert not check_growth(QUAD, 1.0, 1.0, [10**4])


def test_check_growth_exponential_hazard_fails_with_witness():
    # h(u) = e^u so H(x) = e^x - 1 grows faster than any polynomial
    H = Generic(lambda x: np.expm1(x), integral=lambda x: np.expm1(x) - x)
    fam = PatienceFamily.hazard_scaled(H)
    rep = check_growth(fam, 1.0, 2.0, [100, 10**4, 10**6])
    assert not rep.ok
    n, x = rep.witness
    assert rep.worst_margin < 0
    assert fam.scaled(n, x) > 1.0 + x**2
    with pytest.raises(ValueError):
        check_growth(fam, 0.0, 1.0, [1])


def coupled_cfg(fam, theta, n=16, seed=0, num_arrivals=200_000):
    return SimConfig(HeavyTrafficParams(1.0, theta, n), PrimitiveSpec.gamma(2.0),
                     PrimitiveSpec.lognormal(0.5), fam, num_arrivals=num_arrivals,
                     num_batches=8, seed=seed)


def test_simulate_coupled_dominates():
    dom = DominatingFamily(QUAD, 1.0, 0.5, sigma_bar=0.5)
    cfg = coupled_cfg(QUAD, 0.5)
    res, dres, viol = simulate_coupled(cfg, dom)
    assert viol <= 1e-12
    plain = simulate(cfg)
    assert np.array_equal(plain.batch_moment, res.batch_moment)
    assert dres.scaled_moments[1.0].value >= res.scaled_moments[1.0].value - 1e-9
    assert dres.abandon_fraction.value <= res.abandon_fraction.value


def test_uncapped_coupling_reproduces_original():
    # cap above the sup of sqrt(n) F^n: every d* equals d
    dom = DominatingFamily(QUAD, 1.0, 0.5, sigma_bar=10.0)
    res, dres, viol = simulate_coupled(coupled_cfg(QUAD, 0.5, n=16), dom)
    assert np.array_equal(res.batch_moment, dres.batch_moment)
    assert viol <= 0.0


def test_all_infinite_coupling_is_no_abandonment_queue():
    # negative cap level: every dominating customer waits forever
    fam = PatienceFamily.constant_hazard(1.0)
    dom = DominatingFamily(fam, 1.0, -1.0, sigma_bar=0.5)
    assert dom.cap_level < 0
    assert np.all(np.isinf(dom.couple(np.array([0.0, 1e-9, 5.0]), 16)))
    cfg = coupled_cfg(fam, -1.0)
    res, dres, viol = simulate_coupled(cfg, dom)
    assert viol <= 1e-12
    assert dres.abandon_fraction.value == 0.0
    none = simulate(coupled_cfg(PatienceFamily.no_abandonment(), -1.0))
    np.testing.assert_allclose(dres.batch_moment, none.batch_moment, rtol=1e-12)
