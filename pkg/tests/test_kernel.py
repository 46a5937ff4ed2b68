import math

import numpy as np
import pytest
from scipy import integrate, stats

from ipevo.batch import PartitionBatch
from ipevo.kernel import (L_density, L_laplace, evolve_batch, evolve_by_kernel, kappa0_batch, kappa0_step, kappa_batch,
                          kappa_step, sample_L, sample_mu)
from ipevo.partition import empty, from_masses
from ipevo.randkit import InvalidInput, RandomStream

P = 1e-3
EPS = 1e-5


def test_laplace_closed_form_value():
    # sqrt(2) (e^(1/2) - 1) / (e - 1)
    assert L_laplace(0.5, 1.0, 1.0, 1.0) == pytest.approx(math.sqrt(2) * math.expm1(0.5) / math.expm1(1.0), rel=1e-12)
    assert L_laplace(0.5, 1.0, 1.0, 1.0) == pytest.approx(0.53393, abs=1e-5)
    assert L_laplace(0.5, 1.0, 1.0, 0.0) == pytest.approx(1.0)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_L_empirical_laplace(lam):
    L = sample_L(np.random.default_rng(1), 0.5, np.ones(100_000), 1.0)
    e = np.exp(-lam * L)
    assert abs(e.mean() - L_laplace(0.5, 1.0, 1.0, lam)) < 3 * e.std() / math.sqrt(len(e))


@pytest.mark.parametrize("alpha,b,r", [(0.5, 1.0, 1.0), (0.25, 2.0, 0.5), (0.75, 0.3, 3.0)])
def test_L_density_integrates_to_one(alpha, b, r):
    f = lambda c: float(L_density(alpha, b, r, c)[0])
    total = sum(integrate.quad(f, lo, hi, limit=200, epsabs=1e-12)[0]
                for lo, hi in [(0, 1e-6), (1e-6, 1), (1, 10), (10, np.inf)])
    assert total == pytest.approx(1.0, abs=1e-6)


def test_L_density_matches_sampler():
    L = sample_L(np.random.default_rng(2), 0.5, np.ones(10_000), 1.0)
    grid = np.geomspace(1e-12, 60, 20_000)
    cdf = np.concatenate([[0.0], integrate.cumulative_trapezoid(L_density(0.5, 1.0, 1.0, grid), grid)])
    assert stats.kstest(L, lambda x: np.interp(x, grid, cdf)).pvalue > P


def test_empty_maps_to_empty():
    assert kappa_step(RandomStream(1), 0.5, empty(0.5), 0.5).is_empty()


def test_single_block_death_probability():
    n = 100_000
    out = kappa_batch(np.random.default_rng(3), 0.5, PartitionBatch.single_blocks(np.ones(n), 0.5), 0.5, 1e-4)
    dead = out.total_mass() <= 0
    p = math.exp(-1)
    assert abs(dead.mean() - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_type1_mass_is_martingale():
    n = 20_000
    start = PartitionBatch.single_blocks(np.full(n, 0.7), 0.5)
    m = kappa_batch(np.random.default_rng(4), 0.5, start, 0.3, EPS).total_mass()
    assert abs(m.mean() - 0.7) < 3 * m.std() / math.sqrt(n)


def test_type0_from_empty():
    n = 10_000
    out = kappa0_batch(np.random.default_rng(5), 0.5, PartitionBatch.empty(n, 0.5), 0.5, EPS)
    m = out.total_mass()
    assert np.all(m > 0)
    assert stats.kstest(m, stats.gamma(0.5).cdf).pvalue > P


def test_type0_from_block_is_besq_2alpha():
    # BESQ(d) from x at time t: X / t is noncentral chi-square(d, x / t)
    n, a, y = 10_000, 0.5, 0.5
    m = kappa0_batch(np.random.default_rng(6), a, PartitionBatch.single_blocks(np.ones(n), a), y, EPS).total_mass()
    assert stats.kstest(m / y, stats.ncx2(2 * a, 1 / y).cdf).pvalue > P


def test_single_step_helpers():
    s = RandomStream(7)
    mu = sample_mu(s, 0.5, 1.0, 1.0, EPS)
    assert mu.total_mass >= 0
    b = kappa0_step(s.child(1), 0.5, from_masses([1.0], alpha=0.5), 0.5, EPS)
    assert b.total_mass > 0
    with pytest.raises(InvalidInput):
        kappa_step(s, 0.5, from_masses([1.0]), -1.0)
    with pytest.raises(InvalidInput):
        sample_mu(s, 0.5, 1.0, 0.0)


def test_degenerate_level_grid():
    b = from_masses([0.3, 0.2], alpha=0.5)
    tr = evolve_by_kernel(RandomStream(8), 0.5, b, [0.0])
    assert len(tr.states) == 1 and tr.states[0].allclose(b)


def test_evolve_batch_records_levels():
    start = PartitionBatch.single_blocks(np.ones(50), 0.5)
    tr = evolve_batch(np.random.default_rng(9), 0.5, start, [0, 0.1, 0.3], 1, EPS)
    assert len(tr.batches) == 3
    with pytest.raises(InvalidInput):
        evolve_batch(np.random.default_rng(9), 0.5, start, [0.2, 0.1], 1, EPS)
