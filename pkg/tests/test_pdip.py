import numpy as np
import pytest
from scipy import stats

from ipevo.pdip import (dust_rate, pdip_batch, sample_pdip, sample_stable_partition, sample_stable_range, stable_batch,
                        suggested_eps)
from ipevo.randkit import InvalidInput, RandomStream

P = 1e-3


def rightmost(b):
    st = b.starts()
    out = np.zeros(b.n)
    has = st[1:] > st[:-1]
    out[has] = b.mass[st[1:][has] - 1]
    return out


def test_stable_mass_and_diversity():
    rng = np.random.default_rng(1)
    b, S = stable_batch(rng, 0.5, np.ones(10_000), 1e-6)
    assert stats.kstest(b.total_mass(), stats.gamma(0.5).cdf).pvalue > P
    assert stats.kstest(S, stats.expon().cdf).pvalue > P
    assert np.allclose(b.div_end, S)


def test_stable_tilt_rate():
    rng = np.random.default_rng(2)
    b, S = stable_batch(rng, 0.5, np.full(10_000, 4.0), 1e-6)
    assert stats.kstest(b.total_mass(), stats.gamma(0.5, scale=0.25).cdf).pvalue > P
    assert stats.kstest(S, stats.expon(scale=0.5).cdf).pvalue > P


def test_truncation_robust():
    m6 = stable_batch(np.random.default_rng(3), 0.5, np.ones(10_000), 1e-5)[0].total_mass()
    m8 = stable_batch(np.random.default_rng(4), 0.5, np.ones(10_000), 1e-7)[0].total_mass()
    assert stats.ks_2samp(m6, m8).pvalue > P


def test_dust_rate_small_eps():
    # mean mass per unit local time of jumps below eps: a eps^(1-a) / ((1-a) Gamma(1-a)) for small eps
    a, eps = 0.5, 1e-9
    assert dust_rate(a, 1.0, eps) == pytest.approx(a * eps**0.5 / (0.5 * np.sqrt(np.pi)), rel=1e-6)


def test_a0_leftmost_beta():
    b = pdip_batch(np.random.default_rng(5), 0.5, "a0", 10_000, 1e-6)
    assert stats.kstest(b.leftmost(), stats.beta(0.5, 0.5).cdf).pvalue > P
    assert np.allclose(b.total_mass(), 1.0)


@pytest.mark.parametrize("alpha", [0.25, 0.75])
def test_a0_leftmost_beta_other_alpha(alpha):
    b = pdip_batch(np.random.default_rng(6), alpha, "a0", 5000, suggested_eps(alpha))
    assert stats.kstest(b.leftmost(), stats.beta(1 - alpha, alpha).cdf).pvalue > P


def test_aa_reversal_invariance():
    b = pdip_batch(np.random.default_rng(7), 0.5, "aa", 10_000, 1e-6)
    left, right = b.leftmost(), rightmost(b)
    assert stats.ks_2samp(left[: 5000], right[5000:]).pvalue > P
    assert stats.ks_2samp(b.ranked(2)[: 5000], b.ranked(2)[5000:]).pvalue > P


def test_a0_is_not_reversal_invariant():
    b = pdip_batch(np.random.default_rng(8), 0.5, "a0", 4000, 1e-6)
    assert stats.ks_2samp(b.leftmost(), rightmost(b)).pvalue < P


def test_top_block_matches_stick_breaking():
    # PD(a, a) ranked masses via stick-breaking; compare the largest
    rng = np.random.default_rng(9)
    a, n, k = 0.5, 5000, 4000
    w = np.empty((n, k))
    rest = np.ones(n)
    for i in range(k):
        v = rng.beta(1 - a, a + (i + 1) * a, size=n)
        w[:, i] = rest * v
        rest = rest * (1 - v)
    top = w.max(axis=1)
    b = pdip_batch(rng, a, "aa", n, 1e-6)
    assert stats.ks_2samp(b.largest(), top).pvalue > P


def test_normalization_and_dust():
    eps = 1e-6
    b = pdip_batch(np.random.default_rng(10), 0.5, "aa", 200, eps)
    assert np.allclose(b.total_mass(), 1.0)
    assert np.all(b.mass[b.mass > 0] >= 0) and np.all(b.truncation_mass() < 1.0)
    p = sample_pdip(RandomStream(1), 0.5, "aa", eps)
    assert p.total_mass == 1.0


def test_single_samplers():
    s = RandomStream(11)
    r = sample_stable_range(s, 0.5, 1.0, 1e-6)
    r.check()
    p = sample_stable_partition(s.child(1), 0.5, 1.0, 1e-6)
    assert p.diversity is not None and p.diversity_end >= p.diversity[-1]
    with pytest.raises(InvalidInput):
        sample_pdip(s, 0.5, "ab")
    with pytest.raises(InvalidInput):
        sample_stable_range(s, 1.5, 1.0)


def test_suggested_eps_values():
    assert suggested_eps(0.5) == pytest.approx((500 * np.sqrt(np.pi)) ** -2)
    assert suggested_eps(0.5, blocks=1) == 1e-4
