import math

import numpy as np
import pytest
from scipy import integrate, stats

from ipevo import laws
from ipevo.kernel import L_density
from ipevo.spindle import besq0_density, besq_neg_density


def quad(f, lo, hi):
    return integrate.quad(lambda x: float(np.atleast_1d(f(x))[0]), lo, hi, limit=400, epsabs=1e-13)[0]


def test_frozen_constants():
    assert laws.besq0_atom(1.0, 0.5) == pytest.approx(0.36787944, abs=1e-8)
    assert laws.besq0_atom(1.0, 1.0) == pytest.approx(0.60653066, abs=1e-8)
    assert float(laws.hitting_laplace_exponent(0.5, 1.0)) == pytest.approx(1.1624474, abs=1e-6)
    assert float(laws.hitting_laplace_exponent(0.5, 1.0)) == pytest.approx(1.1625, abs=1e-4)
    assert stats.invgamma(1.5, scale=0.5).mean() == pytest.approx(1.0)


@pytest.mark.parametrize("b,y", [(1.0, 0.3), (2.0, 0.5), (0.1, 1.0)])
def test_besq0_positive_part(b, y):
    dens = lambda x: laws.besq0_density_positive(b, y, x)
    total = quad(dens, 0, 1) + quad(dens, 1, np.inf)
    assert total == pytest.approx(1 - laws.besq0_atom(b, y), abs=1e-8)
    c = 0.7
    part = quad(dens, 0, c) / total
    assert float(laws.besq0_cdf_positive(b, y, c)) == pytest.approx(part, abs=1e-8)
    assert float(besq0_density(b, c, y)) == pytest.approx(float(dens(c)), rel=1e-8)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_leftmost_cdf_matches_density(alpha):
    b, r = 1.0, 1.0
    k = 4
    # x = t^k removes the c^(-a) singularity at zero
    f = lambda t: L_density(alpha, b, r, t**k) * k * t ** (k - 1)
    for c in [0.1, 0.5, 2.0]:
        val = quad(f, 0, c ** (1 / k))
        assert float(laws.leftmost_cdf(alpha, b, r, c)) == pytest.approx(val, abs=1e-6)


def test_clade_mass_given_lifetime_cdf():
    alpha, z = 0.5, 1.0
    dens = lambda x: laws.clade_mass_given_lifetime_density(alpha, z, x)
    total = quad(dens, 0, 1) + quad(dens, 1, np.inf)
    F = laws.clade_mass_given_lifetime_cdf(alpha, z)
    for c in [0.05, 0.5, 3.0]:
        assert float(F(c)[0]) == pytest.approx(quad(dens, 0, c) / total, abs=1e-7)


def test_leftmost_reversal_density_normalized():
    alpha, y, z = 0.5, 0.5, 0.2
    f = lambda c: laws.leftmost_reversal_density(alpha, y, z, c)
    assert quad(f, 0, 1) + quad(f, 1, np.inf) == pytest.approx(1.0, abs=1e-6)


def test_besq_neg_density_mass():
    # survival probability of BESQ(-2a) from b at y is P{InverseGamma(1+a, b/2) > y}
    alpha, b, y = 0.5, 1.0, 0.2
    f = lambda c: besq_neg_density(alpha, b, c, y)
    total = quad(f, 0, 1) + quad(f, 1, np.inf)
    assert total == pytest.approx(stats.invgamma(1 + alpha, scale=b / 2).sf(y), abs=1e-6)


def test_tabulated_cdf():
    F = laws.tabulated_cdf(lambda x: np.exp(-x), 1e-9, 50.0)
    assert float(F(1.0)) == pytest.approx(1 - math.exp(-1), abs=1e-5)


def test_reference_cdfs():
    assert laws.gamma_cdf(1.0, 2.0)(0.5) == pytest.approx(1 - math.exp(-1))
    assert laws.beta_cdf(0.5, 0.5)(0.5) == pytest.approx(0.5)
    assert laws.inverse_gamma_cdf(1.5, 0.5)(1e9) == pytest.approx(1.0)
