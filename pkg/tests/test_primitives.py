import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from abandonq.limits import Polynomial
from abandonq.primitives import (A3Report, AssumptionWarning, HeavyTrafficParams,
                                 PatienceFamily, PrimitiveSpec, check_A1, check_A3, check_A4,
                                 check_A5, patience_cdf, sample, sample_patience)

ALL_SPECS = [
    PrimitiveSpec.exponential(),
    PrimitiveSpec.gamma(2.0),
    PrimitiveSpec.gamma(0.5),
    PrimitiveSpec.lognormal(0.75),
    PrimitiveSpec.deterministic(),
    PrimitiveSpec.hyperexponential([0.3, 0.7], [0.5, 4.0]),
    PrimitiveSpec.uniform(1.5),
]


def test_deterministic_sample_is_one(rng):
    spec = PrimitiveSpec.deterministic()
    assert sample(spec, rng) == 1.0
    assert np.all(sample(spec, rng, 10) == 1.0)


def test_exponential_reproducible_and_unit_mean():
    spec = PrimitiveSpec.exponential()
    a = sample(spec, np.random.default_rng(7), 10**6)
    b = sample(spec, np.random.default_rng(7), 10**6)
    assert np.array_equal(a, b)
    assert abs(a.mean() - 1.0) <= 0.004


def test_gamma2_variance(rng):
    x = sample(PrimitiveSpec.gamma(2.0), rng, 10**6)
    assert abs(x.var() - 0.5) <= 0.01


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
def test_unit_mean_analytic(spec):
    assert abs(spec.mean() - 1.0) <= 1e-12


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
def test_unit_mean_sampled_within_4se(spec, rng):
    x = spec.sample(rng, 10**6)
    assert np.all(x >= 0)
    se = math.sqrt(spec.variance() / x.size)
    assert abs(x.mean() - 1.0) <= max(4 * se, 1e-12)
    if spec.variance() > 0:
        assert x.var() == pytest.approx(spec.variance(), rel=0.05)


def test_moment_formulas_against_scipy():
    assert PrimitiveSpec.exponential().moment(3) == pytest.approx(6.0)
    g = PrimitiveSpec.gamma(2.5)
    assert g.moment(3.3) == pytest.approx(stats.gamma(2.5, scale=1 / 2.5).expect(lambda x: x**3.3))
    ln = PrimitiveSpec.lognormal(0.4)
    ref = stats.lognorm(0.4, scale=math.exp(-0.08)).expect(lambda x: x**2.7)
    assert ln.moment(2.7) == pytest.approx(ref, rel=1e-7)
    u = PrimitiveSpec.uniform(1.0)
    assert u.moment(2) == pytest.approx(1.0 + 1.0 / 12.0)
    h = PrimitiveSpec.hyperexponential([1, 1], [1, 3])
    assert h.moment(2) == pytest.approx(h.variance() + 1.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        PrimitiveSpec("pareto")
    with pytest.raises(ValueError):
        PrimitiveSpec.gamma(-1.0)
    with pytest.raises(ValueError):
        PrimitiveSpec.uniform(2.5)
    with pytest.raises(ValueError):
        PrimitiveSpec.hyperexponential([1.0], [1.0, 2.0])


def test_spec_config_roundtrip():
    for spec in ALL_SPECS:
        assert PrimitiveSpec.from_config(spec.to_config()) == spec


def test_check_A1():
    assert check_A1(PrimitiveSpec.lognormal(1.0), 3.0)
    with pytest.raises(ValueError):
        check_A1(PrimitiveSpec.exponential(), 2.0)


def test_check_A5_flags_bounded_kinds():
    for spec in (PrimitiveSpec.deterministic(), PrimitiveSpec.uniform(1.0)):
        with pytest.warns(AssumptionWarning):
            assert not check_A5(spec)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert not check_A5(spec, waive=True)
    assert check_A5(PrimitiveSpec.gamma(3.0))


@given(lam=st.floats(0.1, 10.0), theta=st.floats(-5.0, 5.0), n=st.integers(1, 10**6))
def test_heavy_traffic_rates(lam, theta, n):
    try:
        p = HeavyTrafficParams(lam, theta, n)
    except ValueError:
        assert n * lam - math.sqrt(n) * theta <= 0
        return
    assert p.arrival_rate == n * lam
    assert p.service_rate > 0
    assert math.sqrt(n) * (lam - p.service_rate / n) == pytest.approx(theta, abs=1e-9 * max(1, n * lam / math.sqrt(n)))


def test_heavy_traffic_rejects_nonpositive_service_rate():
    with pytest.raises(ValueError):
        HeavyTrafficParams(1.0, 2.0, 4)   # mu = 4 - 2*2 = 0
    with pytest.raises(ValueError):
        HeavyTrafficParams(1.0, 0.0, 0)


# patience families -----------------------------------------------------------

def table_family():
    x = [0.0, 0.5, 1.0, 2.0, 4.0]
    F = [0.0, 0.3, 0.3, 0.8, 1.0]
    return PatienceFamily.external_table(x, F)


def builtin_families():
    return [
        PatienceFamily.constant_hazard(1.5),
        PatienceFamily.hazard_scaled(Polynomial([0.5, 1.0])),
        PatienceFamily.capped(Polynomial([0.0, 0.0, 1.0])),
        PatienceFamily.unscaled_exponential(2.0),
        PatienceFamily.unscaled_scipy(stats.gamma(2.0, scale=0.5)),
        table_family(),
    ]


def test_constant_hazard_cdf_is_exponential_for_all_n():
    fam = PatienceFamily.constant_hazard(0.7)
    x = np.linspace(0, 5, 11)
    for n in (1, 9, 10**4):
        np.testing.assert_allclose(patience_cdf(fam, n, x), 1 - np.exp(-0.7 * x), rtol=1e-13,
                                   atol=1e-16)


@pytest.mark.parametrize("fam", builtin_families(), ids=lambda f: f.name)
def test_cdf_zero_at_origin(fam):
    for n in (1, 4, 100):
        assert patience_cdf(fam, n, 0.0) == 0.0


def test_capped_h_example():
    fam = PatienceFamily.capped(Polynomial([0.0, 0.0, 1.0]))
    assert patience_cdf(fam, 4, 0.5) == pytest.approx(0.5)
    assert patience_cdf(fam, 4, 10.0) == 1.0


def test_sample_patience_examples():
    fam = PatienceFamily.constant_hazard(2.0)
    u = np.array([0.0, 0.1, 0.5, 0.99])
    np.testing.assert_allclose(fam.inverse(3, u), -np.log1p(-u) / 2.0, rtol=1e-13)
    assert fam.inverse(3, 0.0) == 0.0
    d = sample_patience(fam, 5, np.random.default_rng(1), 1000)
    assert np.all(d > 0)


def test_no_abandonment_samples_infinite(rng):
    fam = PatienceFamily.no_abandonment()
    assert np.all(np.isinf(fam.sample(10, rng, 1000)))
    assert fam.sup(10) == 0.0


def test_external_table_inverse_on_nodes():
    fam = table_family()
    tx, tF = fam.table
    # flat piece at 0.3 maps to its left end
    assert fam.inverse(1, 0.3) == pytest.approx(0.5)
    for x, F in zip(tx[1:], tF[1:]):
        if F > 0:
            assert fam.cdf(1, fam.inverse(1, F)) == pytest.approx(F, abs=1e-9)
    assert fam.cdf(1, 100.0) == 1.0


def test_external_table_clamps_and_csv(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("x,F\n0.5,0.25\n1.0,0.5\n3.0,0.6\n")
    fam = PatienceFamily.from_csv(p)
    assert fam.cdf(1, 0.25) == pytest.approx(0.125)   # (0,0) is prepended
    assert fam.cdf(1, 10.0) == pytest.approx(0.6)
    assert fam.inverse(1, 0.7) == np.inf
    assert fam.H(1.0) == pytest.approx(0.5)             # slope of first segment
    with pytest.raises(ValueError):
        PatienceFamily.external_table([0, 1, 1], [0, 0.5, 0.6])
    with pytest.raises(ValueError):
        PatienceFamily.external_table([0, 1, 2], [0, 0.6, 0.5])


@pytest.mark.parametrize("fam", [f for f in builtin_families()], ids=lambda f: f.name)
def test_inverse_transform_round_trip(fam, rng):
    u = rng.random(10**4)
    for n in (1, 100):
        d = fam.inverse(n, u)
        finite = np.isfinite(d)
        back = fam.cdf(n, d[finite])
        assert np.all(np.abs(back - u[finite]) <= 1e-9)
        # +inf only where u is above the supremum of F^n
        assert np.all(u[~finite] > fam.sup(n) - 1e-12)


@settings(max_examples=40, deadline=None)
@given(xs=st.lists(st.floats(0.0, 20.0), min_size=2, max_size=30),
       n=st.sampled_from([1, 3, 100, 10**4]), idx=st.integers(0, 5))
def test_cdf_and_scaled_monotone(xs, n, idx):
    fam = builtin_families()[idx]
    x = np.sort(np.asarray(xs))
    F = fam.cdf(n, x)
    assert np.all(np.diff(F) >= -1e-15)
    assert np.all((F >= 0) & (F <= 1))
    S = fam.scaled(n, x)
    assert np.all(np.diff(S) >= -1e-12)


def test_family_validation_rejects_bad_H():
    with pytest.raises(ValueError):
        PatienceFamily.capped(Polynomial([0.5, 1.0]))   # H(0) != 0


def test_family_config_roundtrip():
    for fam in (PatienceFamily.constant_hazard(1.0), PatienceFamily.capped([0, 0, 1]),
                PatienceFamily.unscaled_exponential(3.0)):
        again = PatienceFamily.from_config(fam.to_config())
        x = np.linspace(0, 2, 7)
        np.testing.assert_allclose(again.cdf(9, x), fam.cdf(9, x))


# assumption checks -----------------------------------------------------------

def test_check_A3_capped_is_exact_below_cap():
    fam = PatienceFamily.capped(Polynomial([0.0, 0.0, 1.0]))
    rep = check_A3(fam, K=3.0, n_list=[81, 100, 10**4])     # sqrt(n) >= H(3) = 9
    assert rep.errors == [0.0, 0.0, 0.0]
    assert rep.non_increasing


def test_check_A3_unscaled_exponential_value():
    fam = PatienceFamily.unscaled_exponential(1.0)
    rep = check_A3(fam, K=1.0, n_list=[100])
    expected = abs(10 * (1 - math.exp(-0.1)) - 1.0)      # attained at x = K
    assert rep.errors[0] == pytest.approx(expected, rel=1e-9)
    assert rep.errors[0] == pytest.approx(0.0484, abs=1e-4)


def test_check_A3_hazard_scaled_error_is_nonzero_and_decreasing():
    beta = 2.0
    fam = PatienceFamily.constant_hazard(beta)
    ns = [100, 10**4, 10**6]
    rep = check_A3(fam, K=2.0, n_list=ns)
    for n, e in zip(ns, rep.errors):
        rn = math.sqrt(n)
        assert e == pytest.approx(abs(rn * (1 - math.exp(-beta * 2.0 / rn)) - beta * 2.0),
                                  rel=1e-6)
        assert e > 0
    assert rep.strictly_decreasing


def test_check_A3_flags_increasing_errors():
    rep = A3Report([1, 2, 3], 1.0, [0.1, 0.2, 0.05], [(1, 2)])
    assert not rep.non_increasing and not rep.strictly_decreasing
    with pytest.raises(ValueError):
        check_A3(PatienceFamily.constant_hazard(1.0), 0.0, [1])


def test_check_A4_examples():
    r = check_A4(Polynomial([0.0, 1.0]), (1.0, 1.0), x_max=100.0)
    assert r.ok and r.margin == pytest.approx(99.0)
    r = check_A4(Polynomial([0.0]), (1.0, -1.0))
    assert r.ok and r.margin == pytest.approx(1.0)
    assert not check_A4(Polynomial([0.0]), (1.0, 1.0))
    assert check_A4(PatienceFamily.constant_hazard(1.0), HeavyTrafficParams(1.0, 0.5, 4)).ok
