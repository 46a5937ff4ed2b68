"""Closed-form reference laws used by the verification suite."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, stats
from scipy.special import gammainc, gammaincc, gammaln


def besq0_atom(b, y):
    """P{BESQ(0) from b is absorbed by time y}."""
    return math.exp(-b / (2 * y))


def besq0_cdf_positive(b, y, x, tol=1e-14):
    """CDF of BESQ(0) at time y from b, conditioned on being positive.

    The positive part is a Poisson(b/2y) mixture of Gamma(n, 1/2y), n >= 1.
    """
    x = np.asarray(x, dtype=float)
    lam = b / (2 * y)
    n_max = int(lam + 12 * math.sqrt(lam) + 40)
    n = np.arange(1, n_max + 1)
    logw = n * math.log(lam) - lam - gammaln(n + 1)
    w = np.exp(logw - math.log(-math.expm1(-lam)))
    w = w[w > tol] if np.any(w > tol) else w
    n = n[: len(w)]
    z = np.clip(x, 0, None)[..., None] / (2 * y)
    return (w * gammainc(n, z)).sum(axis=-1)


def besq0_density_positive(b, y, x):
    """Density of the absolutely continuous part of BESQ(0) at time y from b."""
    x = np.asarray(x, dtype=float)
    lam = b / (2 * y)
    n = np.arange(1, int(lam + 12 * math.sqrt(lam) + 40) + 1)
    xs = np.clip(x, 1e-300, None)[..., None]
    logt = (n * math.log(lam) - lam - gammaln(n + 1) - gammaln(n) + (n - 1) * np.log(xs / (2 * y))
            - xs / (2 * y) - math.log(2 * y))
    return np.where(x > 0, np.exp(logt).sum(axis=-1), 0.0)


def gamma_cdf(shape, rate):
    return stats.gamma(shape, scale=1.0 / rate).cdf


def inverse_gamma_cdf(shape, scale):
    return stats.invgamma(shape, scale=scale).cdf


def beta_cdf(a, b):
    return stats.beta(a, b).cdf


def leftmost_cdf(alpha, b, r, c):
    """CDF of the leftmost block L after a step of rate r from a block b, given survival."""
    c = np.asarray(c, dtype=float)
    lam = b * r
    n_max = int(lam + 12 * math.sqrt(lam) + 40)
    n = np.arange(1, n_max + 1)
    w = np.exp(n * math.log(lam) - lam - gammaln(n + 1) - math.log(-math.expm1(-lam)))
    return (w * gammainc(n - alpha, np.clip(c, 0, None)[..., None] * r)).sum(axis=-1)


def tabulated_cdf(density, lo, hi, n=4000, log=True):
    """Numerical CDF of a density on (lo, hi), normalized; returned as a callable."""
    grid = np.geomspace(lo, hi, n) if log else np.linspace(lo, hi, n)
    f = density(grid)
    cum = np.concatenate([[0.0], integrate.cumulative_trapezoid(f, grid)])
    cum /= cum[-1]
    return lambda x: np.interp(x, grid, cum, left=0.0, right=1.0)


def clade_mass_given_lifetime_density(alpha, z, b):
    """Density of m0 given lifetime >= z (unnormalized shape b^{-1-a}(1 - e^{-b/2z}))."""
    b = np.asarray(b, dtype=float)
    return b ** (-1 - alpha) * -np.expm1(-b / (2 * z))


def clade_mass_given_lifetime_cdf(alpha, z):
    """CDF of m0 conditioned on lifetime >= z, via upper incomplete gamma functions."""
    const = alpha * (2 * z) ** alpha / math.gamma(1 - alpha)

    def cdf(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        xs = np.clip(x, 1e-300, None)
        s = xs / (2 * z)
        # Gamma(-a, s) from Gamma(1 - a, s) by the recurrence
        g = (s ** -alpha * np.exp(-s) - math.gamma(1 - alpha) * gammaincc(1 - alpha, s)) / alpha
        tail = xs ** -alpha / alpha - (2 * z) ** -alpha * g
        return np.where(x > 0, 1.0 - const * tail, 0.0)

    return cdf


def leftmost_reversal_density(alpha, y, z, c):
    """Density of the leftmost mass at level y of a clade with overshoot z < y, given survival past y."""
    c = np.asarray(c, dtype=float)
    num = alpha * 2**alpha * c ** (-1 - alpha) / math.gamma(1 - alpha) * (np.exp(-c / (2 * y)) - np.exp(-c / (2 * (y - z))))
    return num / ((y - z) ** (-alpha) - y ** (-alpha))


def hitting_laplace_exponent(alpha, theta):
    """psi^{-1}(theta) for the first-passage subordinator."""
    return (2**alpha * math.gamma(1 + alpha)) ** (1 / (1 + alpha)) * np.asarray(theta, float) ** (1 / (1 + alpha))
