import numpy as np
import pytest
from scipy import stats

from ipevo.randkit import (InvalidInput, RandomStream, parse_seed, sample_beta, sample_exponential, sample_gamma,
                           sample_inverse_gamma, sample_poisson_process)

P = 1e-3


def within_3se(x, mu):
    return abs(np.mean(x) - mu) < 3 * np.std(x, ddof=1) / np.sqrt(len(x))


def test_streams_reproducible_and_independent():
    s = RandomStream(42)
    a = s.child("a", 1).generator().random(5)
    assert np.array_equal(a, RandomStream(42).child("a", 1).generator().random(5))
    assert not np.array_equal(a, s.child("a", 2).generator().random(5))
    assert not np.array_equal(a, RandomStream(43).child("a", 1).generator().random(5))


def test_seed_parsing():
    assert parse_seed("0x10") == 16
    assert parse_seed("42") == 42
    with pytest.raises(InvalidInput):
        parse_seed(2**64)
    with pytest.raises(InvalidInput):
        RandomStream(1).child(-1)


def test_gamma():
    s = RandomStream(1)
    x = sample_gamma(s.child(1), 1.0, 2.0, 100_000)
    assert within_3se(x, 0.5)
    assert within_3se(sample_gamma(s.child(2), 0.5, 1.0, 100_000), 0.5)
    assert stats.kstest(sample_gamma(s.child(3), 0.5, 1.0, 10_000), stats.gamma(0.5).cdf).pvalue > P
    with pytest.raises(InvalidInput):
        sample_gamma(s, -1.0, 1.0)


def test_inverse_gamma():
    s = RandomStream(2)
    x = sample_inverse_gamma(s.child(1), 3.5, 2.5, 100_000)
    assert within_3se(x, 1.0)
    x = sample_inverse_gamma(s.child(2), 1.5, 0.5, 10_000)
    assert stats.kstest(1 / x, stats.gamma(1.5, scale=2.0).cdf).pvalue > P
    x = sample_inverse_gamma(s.child(3), 2.0, 1.0, 10_000)
    med = 1 / stats.gamma(2.0).median()
    # median test: the share below the reference median is binomial(1/2)
    share = np.mean(x < med)
    assert abs(share - 0.5) < 3 * 0.5 / np.sqrt(len(x))


def test_inverse_gamma_mean_infinite_variance_case():
    # shape 1.5: the mean exists, the variance does not; compare medians of batch means instead
    x = sample_inverse_gamma(RandomStream(9), 1.5, 0.5, 100_000)
    assert 0.85 < np.mean(x) < 1.15


def test_beta():
    s = RandomStream(3)
    assert stats.kstest(sample_beta(s.child(1), 1, 1, 10_000), "uniform").pvalue > P
    assert within_3se(sample_beta(s.child(2), 0.5, 0.5, 10_000), 0.5)
    g = s.child(3).generator()
    ga, gb = g.gamma(2.0, size=10_000), g.gamma(3.0, size=10_000)
    assert stats.ks_2samp(ga / (ga + gb), sample_beta(s.child(4), 2.0, 3.0, 10_000)).pvalue > P


def test_exponential():
    x = sample_exponential(RandomStream(4), 2.0, 10_000)
    assert stats.kstest(x, stats.expon(scale=0.5).cdf).pvalue > P


def test_poisson_process():
    s = RandomStream(5)
    assert len(sample_poisson_process(s, 1e-12, 1.0)) == 0
    counts = np.array([len(sample_poisson_process(s.child(i), 3.0, 2.0)) for i in range(10_000)])
    k = np.arange(0, 15)
    obs = np.array([np.sum(counts == j) for j in k[:-1]] + [np.sum(counts >= k[-1])])
    pmf = stats.poisson(6.0).pmf(k[:-1])
    exp = np.append(pmf, 1 - pmf.sum()) * len(counts)
    assert stats.chisquare(obs, exp).pvalue > P
    t = sample_poisson_process(s.child("long"), 5.0, 2000.0)
    assert stats.kstest(np.diff(t), stats.expon(scale=0.2).cdf).pvalue > P
    with pytest.raises(InvalidInput):
        sample_poisson_process(s, 0.0, 1.0)
