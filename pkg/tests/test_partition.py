import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipevo.partition import (IntervalPartition, all_correspondences, brute_force_distance, concatenate, empty,
                             estimate_diversity, from_masses, metric_distance, reverse, scale)
from ipevo.randkit import InvalidInput

masses = st.lists(st.floats(0.01, 5.0), min_size=0, max_size=4)


def part(ms, alpha=0.5, div=True):
    d = np.cumsum(np.r_[0.0, np.ones(len(ms))])[:-1] * 0.3 if div else None
    return from_masses(ms, diversity=d, diversity_end=0.3 * len(ms) if div else None, alpha=alpha)


def test_concatenate_examples():
    assert concatenate([empty(), empty()]).is_empty()
    c = concatenate([from_masses([1.0]), from_masses([2.0])])
    assert np.allclose(c.blocks, [[0, 1], [1, 3]])
    assert c.total_mass == 3.0


def test_concatenate_many():
    k = np.arange(1, 1001)
    parts = [from_masses([2.0**-i]) for i in k]
    c = concatenate(parts)
    assert np.isclose(c.total_mass, np.sum(2.0**-k), rtol=1e-14)
    assert np.allclose(c.lengths, 2.0**-k)


def test_scale_examples():
    b = from_masses([1.0])
    assert scale(1, b).allclose(b)
    assert np.allclose(scale(2, b).blocks, [[0, 2]])
    beta = part([0.3, 1.2, 0.7])
    assert scale(3.7, scale(1 / 3.7, beta)).allclose(beta)
    with pytest.raises(InvalidInput):
        scale(0, b)


def test_reverse_examples():
    assert reverse(empty()).is_empty()
    r = reverse(from_masses([1.0, 2.0]))
    assert np.allclose(r.blocks, [[0, 2], [2, 3]])
    b = from_masses([0.2, 0.5, 0.1], gaps=[0.1, 0.0, 0.3, 0.05])
    assert reverse(reverse(b)).allclose(b)


def test_diversity_estimate_examples():
    h = np.array([1e-1, 1e-3, 1e-6])
    assert np.all(estimate_diversity(empty(0.5), np.inf, h) == 0)
    b = from_masses([0.5, 1.0, 2.0], alpha=0.5)
    est = estimate_diversity(b, np.inf, h)
    assert np.allclose(est, np.sqrt(np.pi) * h**0.5 * 3)
    assert est[-1] < 1e-2
    with pytest.raises(InvalidInput):
        estimate_diversity(b, 1.0, [1e-3, 1e-2])


def test_metric_examples():
    one, two = from_masses([1.0]), from_masses([2.0])
    assert metric_distance(one, one) == 0
    assert metric_distance(empty(), one) == pytest.approx(1.0)
    assert metric_distance(one, two) == pytest.approx(1.0)
    assert brute_force_distance(empty(), one) == pytest.approx(1.0)
    assert brute_force_distance(one, two) == pytest.approx(1.0)


def test_correspondence_count():
    # order-preserving partial matchings of 2 and 2 items: 1 + 4 + 1
    assert len(list(all_correspondences(2, 2))) == 6


@settings(max_examples=60, deadline=None)
@given(masses, masses)
def test_metric_matches_brute_force(a, b):
    x, y = part(a), part(b)
    assert metric_distance(x, y) == pytest.approx(brute_force_distance(x, y), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(masses, masses, masses)
def test_metric_axioms(a, b, c):
    x, y, z = part(a), part(b), part(c)
    dxy = metric_distance(x, y)
    assert dxy == pytest.approx(metric_distance(y, x), abs=1e-12)
    assert metric_distance(x, x) == 0
    assert metric_distance(x, z) <= dxy + metric_distance(y, z) + 1e-12


@settings(max_examples=50, deadline=None)
@given(masses, masses, masses)
def test_concatenate_associative(a, b, c):
    x, y, z = part(a), part(b), part(c)
    left = concatenate([concatenate([x, y]), z])
    right = concatenate([x, concatenate([y, z])])
    assert left.allclose(right)
    assert concatenate([x, y, z]).total_mass == pytest.approx(x.total_mass + y.total_mass + z.total_mass)


@settings(max_examples=50, deadline=None)
@given(masses, st.floats(0.1, 10.0))
def test_scale_and_reverse_properties(a, c):
    x = part(a)
    s = scale(c, x)
    assert s.total_mass == pytest.approx(c * x.total_mass)
    assert s.terminal_diversity() == pytest.approx(c**0.5 * x.terminal_diversity())
    assert np.allclose(np.sort(reverse(x).lengths), np.sort(x.lengths))


def test_json_round_trip():
    b = part([0.4, 1.0])
    assert IntervalPartition.from_json(b.to_json()).allclose(b)


def test_invalid_blocks_rejected():
    with pytest.raises(InvalidInput):
        IntervalPartition(np.array([[0.0, 1.0], [0.5, 2.0]]), 2.0)
