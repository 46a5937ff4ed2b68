import math

import numpy as np
import pytest
from scipy import stats

from ipevo import laws
from ipevo.batch import PartitionBatch
from ipevo.partition import from_masses
from ipevo.randkit import InvalidInput, RandomStream
from ipevo.scaffold import (build_clade, clade_statistics, local_time, positive_stable, skewer, type0_batch, type1_batch,
                            type0_evolution_scaffold, type1_evolution_scaffold)

P = 1e-3


def prop_ok(hits, n, p):
    return abs(hits / n - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_build_clade_is_consistent():
    c = build_clade(RandomStream(1), 0.5, 1.0, z_cutoff=1e-3, level_grid=[0.2, 0.5])
    c.check()
    assert c.initial_spindle.initial_value == 1.0


def test_skewer_at_zero_and_above_max():
    c = build_clade(RandomStream(2), 0.5, 0.7, z_cutoff=1e-3)
    s0 = skewer(c, 0.0)
    assert s0.n_blocks == 1 and s0.lengths[0] == pytest.approx(0.7)
    assert skewer(c, c.maximum + 1.0).is_empty()
    assert local_time(c, c.maximum + 1.0) == 0.0
    with pytest.raises(InvalidInput):
        skewer(c, -0.1)


def test_single_clade_skewers_survival():
    n, y = 1000, 0.5
    alive = 0
    s = RandomStream(3)
    for i in range(n):
        c = build_clade(s.child(i), 0.5, 1.0, z_cutoff=1e-3, level_grid=[y])
        alive += not skewer(c, y).is_empty()
    assert prop_ok(alive, n, 1 - math.exp(-1))


def test_type1_batch_total_mass_besq0():
    n, y = 4000, 0.3
    tr = type1_batch(np.random.default_rng(4), 0.5, PartitionBatch.single_blocks(np.ones(n), 0.5), [0, y])
    m = tr.batches[-1].total_mass()
    assert prop_ok((m == 0).sum(), n, laws.besq0_atom(1.0, y))
    assert stats.kstest(m[m > 0], lambda x: laws.besq0_cdf_positive(1.0, y, x)).pvalue > P


def test_type0_batch_from_empty():
    n, y = 4000, 0.5
    tr = type0_batch(np.random.default_rng(5), 0.5, PartitionBatch.empty(n, 0.5), [0, y])
    m = tr.batches[-1].total_mass()
    assert np.all(m > 0)
    assert stats.kstest(m, stats.gamma(0.5, scale=2 * y).cdf).pvalue > P


def test_type1_leftmost_law():
    n, y = 4000, 0.5
    tr = type1_batch(np.random.default_rng(6), 0.5, PartitionBatch.single_blocks(np.ones(n), 0.5), [0, y],
                     eps=1e-10)
    b = tr.batches[-1]
    left = b.leftmost()[b.total_mass() > 0]
    assert stats.kstest(left, lambda x: laws.leftmost_cdf(0.5, 1.0, 1 / (2 * y), x)).pvalue > P


def test_single_traces():
    b = from_masses([0.5, 0.5], alpha=0.5)
    tr = type1_evolution_scaffold(RandomStream(7), 0.5, b, [0, 0.1, 0.2])
    assert len(tr.states) == 3 and tr.states[0].allclose(b)
    tr0 = type0_evolution_scaffold(RandomStream(8), 0.5, b, [0, 0.1], j=1.0)
    assert tr0.states[-1].total_mass > 0
    with pytest.raises(InvalidInput):
        type0_evolution_scaffold(RandomStream(8), 0.5, b, [0, 0.1], j=0.05)
    with pytest.raises(InvalidInput):
        type1_evolution_scaffold(RandomStream(8), 0.5, b, [0.1, 0.2])


def test_positive_stable_laplace():
    # E exp(-lam S) = exp(-lam^rho) for the standard positive stable law
    rho, lam = 0.5, 1.0
    s = positive_stable(np.random.default_rng(9), rho, 100_000)
    e = np.exp(-lam * s)
    assert abs(e.mean() - math.exp(-lam**rho)) < 3 * e.std() / math.sqrt(len(e))


@pytest.mark.parametrize("sid", ["iv", "v", "vi"])
def test_clade_statistics_fast(sid):
    rep = clade_statistics(RandomStream(10), 0.5, {"stats": [sid], "n": 4000})[0]
    assert rep.passed, rep.line()


def test_clade_statistics_rejects_unknown():
    with pytest.raises(InvalidInput):
        clade_statistics(RandomStream(1), 0.5, ["xyz"])
