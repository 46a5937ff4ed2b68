import math

import numpy as np
import pytest
from scipy import integrate, stats

from ipevo.randkit import InvalidInput, RandomStream
from ipevo.spindle import (besq0_density, besq_marginal, besq_neg_density, besq_path, besq_step, bridge_to_zero_step,
                           euler_absorption, laplace_exponent, laplace_exponent_inverse, lifetime_tail,
                           sample_besq_neg_spindle, sample_clade_leftmost_spindle_given_overshoot,
                           sample_excursion_lifetime_tail, sample_spindle_given_lifetime)

P = 1e-3


def prop_ok(hits, n, p):
    return abs(hits / n - p) < 3 * math.sqrt(p * (1 - p) / n)


@pytest.mark.parametrize("y", [0.5, 1.0])
def test_besq0_atom(y):
    n = 10_000
    z = besq_step(np.random.default_rng(1), 0.0, np.ones(n), y)
    assert prop_ok((z == 0).sum(), n, math.exp(-1 / (2 * y)))


def test_besq0_atom_value():
    assert math.exp(-1 / 2) == pytest.approx(0.60653, abs=1e-5)


def test_besq_2alpha_from_zero_is_gamma():
    y = 0.5
    z = besq_step(np.random.default_rng(2), 1.0, np.zeros(10_000), y)
    assert stats.kstest(z, stats.gamma(0.5, scale=2 * y).cdf).pvalue > P


def test_besq_step_noncentral_chi2():
    x, t, d = 1.3, 0.7, 3.0
    z = besq_step(np.random.default_rng(3), d, np.full(10_000, x), t)
    assert stats.kstest(z / t, stats.ncx2(d, x / t).cdf).pvalue > P


def test_besq_step_scalar():
    assert besq_step(np.random.default_rng(0), 1.0, 2.0, 0.5).shape == (1,)


def test_negative_dimension_absorption():
    a = 0.5
    J, _ = euler_absorption(np.random.default_rng(4), -2 * a, np.ones(5000))
    assert stats.kstest(J, stats.invgamma(1 + a, scale=0.5).cdf).pvalue > P
    v = besq_marginal(np.random.default_rng(5), -2 * a, np.ones(5000), 0.2)
    # P{alive at 0.2} = P{InverseGamma(1.5, 0.5) > 0.2}
    assert prop_ok((v > 0).sum(), 5000, stats.invgamma(1.5, scale=0.5).sf(0.2))


def test_negative_dimension_marginal_matches_density():
    a, b, y = 0.5, 1.0, 0.2
    v = besq_marginal(np.random.default_rng(6), -2 * a, np.full(10_000, b), y)
    v = v[v > 0]
    grid = np.geomspace(1e-10, 30, 20_000)
    f = besq_neg_density(a, b, grid, y)
    cdf = np.concatenate([[0.0], integrate.cumulative_trapezoid(f, grid)])
    assert stats.kstest(v, lambda x: np.interp(x, grid, cdf / cdf[-1])).pvalue > P


def test_besq0_density_mass():
    b, y = 1.0, 0.3
    total = integrate.quad(lambda c: float(besq0_density(b, c, y)), 0, np.inf, limit=200)[0]
    assert total == pytest.approx(1 - math.exp(-b / (2 * y)), abs=1e-8)


def test_lifetime_tail_constant():
    assert lifetime_tail(0.5, 1.0) == pytest.approx(1 / (math.sqrt(2) * math.pi), rel=1e-12)
    assert float(lifetime_tail(0.5, 1.0)) == pytest.approx(0.22508, abs=1e-5)


def test_laplace_exponent_inverse():
    assert laplace_exponent_inverse(0.5, 1.0) == pytest.approx(1.1625, abs=1e-4)
    lam = np.array([0.3, 1.0, 4.0])
    assert np.allclose(laplace_exponent_inverse(0.5, laplace_exponent(0.5, lam)), lam)


def test_excursion_lifetime_tail():
    n = 10_000
    z = sample_excursion_lifetime_tail(RandomStream(7), 0.5, 0.1, n)
    assert np.all(z >= 0.1)
    assert prop_ok((z > 0.2).sum(), n, 2**-1.5)
    with pytest.raises(InvalidInput):
        sample_excursion_lifetime_tail(RandomStream(7), 0.5, 0.0)


def test_spindle_midpoint_and_reversal():
    # BESQ(4+2a) bridge from 0 to 0 over zeta: value at t is Gamma(2+a, scale 2t(zeta-t)/zeta)
    a, zeta, n = 0.5, 2.0, 2000
    s = RandomStream(8)
    mid, q1, q3 = [], [], []
    for i in range(n):
        f = sample_spindle_given_lifetime(s.child(i), a, zeta)
        mid.append(f.value_at(zeta / 2))
        q1.append(f.value_at(zeta / 4))
        q3.append(f.value_at(3 * zeta / 4))
    assert stats.kstest(mid, stats.gamma(2 + a, scale=zeta / 2).cdf).pvalue > P
    assert stats.ks_2samp(q1[: n // 2], q3[n // 2:]).pvalue > P


def test_spindle_scaling():
    a, c, n = 0.5, 3.0, 2000
    s = RandomStream(9)
    small = [sample_spindle_given_lifetime(s.child("a", i), a, 1.0).value_at(0.5) for i in range(n)]
    big = [sample_spindle_given_lifetime(s.child("b", i), a, c).value_at(c / 2) / c for i in range(n)]
    assert stats.ks_2samp(small, big).pvalue > P


def test_spindle_consistency_and_errors():
    f = sample_spindle_given_lifetime(RandomStream(10), 0.5, 1.0, grid=[0.25, 0.5, 0.75])
    v = f.value_at(0.5)
    assert f.value_at(0.5) == v
    assert f.value_at(1.5) == 0.0
    f.check()
    f.freeze()
    with pytest.raises(InvalidInput):
        f.value_at(0.3)
    with pytest.raises(InvalidInput):
        sample_spindle_given_lifetime(RandomStream(10), 0.5, 0.0)


def test_broken_spindle():
    f = sample_besq_neg_spindle(RandomStream(11), 0.5, 1.0, grid=[0.1])
    assert f.initial_value == 1.0 and f.value_at(f.lifetime) == 0.0


def test_clade_leftmost_given_overshoot():
    y, n = 0.5, 10_000
    s = RandomStream(12)
    A = np.array([sample_clade_leftmost_spindle_given_overshoot(s.child(i), 0.5, y)[0] for i in range(n)])
    assert stats.kstest(A, stats.expon(scale=2 * y).cdf).pvalue > P
    _, f = sample_clade_leftmost_spindle_given_overshoot(s.child("x"), 0.5, y, grid=[0.25])
    assert f.lifetime == y and f.values[-1] == 0.0


def test_bridge_step_endpoint():
    v = bridge_to_zero_step(np.random.default_rng(13), 5.0, np.ones(1000), 1.0, 1.0 - 1e-12)
    assert np.all(v < 1e-6)


def test_besq_path():
    grid = np.linspace(0, 2, 21)
    f = besq_path(RandomStream(14), 0.0, 1.0, grid)
    assert f.values[0] == 1.0
    assert all(v >= 0 for v in f.values)
    g = besq_path(RandomStream(15), -1.0, 1.0, grid)
    assert g.values[-1] == 0.0
    h = besq_path(RandomStream(16), 1.0, 0.0, grid)
    assert h.lifetime == 2.0
    with pytest.raises(InvalidInput):
        besq_path(RandomStream(1), -1.0, 0.0, grid)
