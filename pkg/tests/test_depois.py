import numpy as np
import pytest
from scipy import stats

from ipevo.batch import PartitionBatch
from ipevo.depois import TimeChange, depoissonize, depoissonized_at, normalize, trace_rows
from ipevo.kernel import evolve_by_kernel
from ipevo.partition import empty, from_masses, scale
from ipevo.pdip import pdip_batch
from ipevo.randkit import InvalidInput, RandomStream
from ipevo.trace import EvolutionTrace


def test_constant_mass_linear_time_change():
    levels = np.linspace(0, 2, 11)
    tc = TimeChange.from_masses(levels, np.full(11, 2.5))
    assert np.allclose(tc.integral, levels / 2.5)
    u = np.array([0.1, 0.3, 0.7])
    assert np.allclose(tc.rho(u), 2.5 * u)
    tc.check()
    with pytest.raises(InvalidInput):
        tc.rho(10.0)


def test_empty_start_rejected():
    with pytest.raises(InvalidInput):
        TimeChange.from_masses([0, 1], [0.0, 1.0])


def test_normalize():
    b = normalize(from_masses([1.0, 3.0], gaps=[0.0, 0.5, 0.5], alpha=0.5))
    assert b.total_mass == 1.0
    assert np.allclose(b.lengths, [0.2, 0.6])


@pytest.mark.filterwarnings("ignore:mass changes")
def test_scaling_invariance_exact():
    tr = evolve_by_kernel(RandomStream(1), 0.5, from_masses([0.6, 0.4], alpha=0.5), np.linspace(0, 0.3, 7),
                          eps=1e-5)
    c = 3.0
    scaled = EvolutionTrace(0.5, c * tr.levels, [scale(c, s) for s in tr.states], tr.method, tr.type)
    a, b = depoissonize(tr), depoissonize(scaled)
    assert np.allclose(a.levels, b.levels, rtol=1e-12)
    for x, y in zip(a.states, b.states):
        assert x.allclose(y, rtol=1e-9)


@pytest.mark.filterwarnings("ignore:mass changes")
def test_depoissonize_truncates_dead_trace():
    states = [from_masses([1.0]), from_masses([0.5]), empty()]
    dp = depoissonize(EvolutionTrace(0.5, [0, 0.1, 0.2], states))
    assert dp.flags["truncated"] and len(dp.states) == 2
    rows = trace_rows(dp)
    assert rows[1][-2] == pytest.approx(dp.levels[1]) and rows[0][2] == 1.0


def test_depoissonized_at_masses_and_grid():
    rng = np.random.default_rng(2)
    start = PartitionBatch.single_blocks(np.ones(200), 0.5)
    out, masses, died = depoissonized_at(rng, 0.5, start, [0.0, 0.1], type=0, du=0.02, eps=1e-5, mass_levels=[0.2])
    assert np.allclose(out[0.0].total_mass(), 1.0)
    assert np.allclose(out[0.1].total_mass(), 1.0)
    assert np.all(masses[:, 0] > 0) and not died.any()


def test_type0_stationary_small():
    rng = np.random.default_rng(3)
    n = 1500
    start = pdip_batch(rng, 0.5, "aa", n, 1e-6)
    out, _, _ = depoissonized_at(rng, 0.5, start, [0.2], type=0, du=0.05, eps=1e-6)
    ref = pdip_batch(rng, 0.5, "aa", n, 1e-6)
    assert stats.ks_2samp(out[0.2].largest(), ref.largest()).pvalue > 1e-3


def test_invalid_u():
    with pytest.raises(InvalidInput):
        depoissonized_at(np.random.default_rng(0), 0.5, PartitionBatch.single_blocks([1.0], 0.5), [-0.1])
    with pytest.raises(InvalidInput):
        depoissonized_at(np.random.default_rng(0), 0.5, PartitionBatch.empty(1, 0.5), [0.1])
