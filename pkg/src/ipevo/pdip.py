"""Stable and tilted-stable subordinator ranges, PDIP(a, a) and PDIP(a, 0).

The tilted subordinator has Laplace exponent (r + l)^a - r^a and is killed
at an independent Exponential(r^a) local time S.  Its jumps above eps form
a Poisson process in local time; they are drawn by thinning the untilted
stable jumps (Pareto sizes above eps) with probability exp(-r c).  Jumps
below eps are not drawn; their mean mass per unit local time is recorded
as dust between the neighbouring blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from .batch import PartitionBatch, concat_batches, stack_batches
from .randkit import InvalidInput, _rng

DEFAULT_EPS = 1e-8


@dataclass
class SubordinatorRange:
    """Jumps of a killed subordinator, with the local time of each jump."""

    jumps: np.ndarray  # columns: local time s, jump size
    elapsed_local_time: float
    terminal_value: float
    tilt_rate: float
    truncation_mass: float

    def check(self):
        s = self.jumps[:, 0]
        assert np.all(np.diff(s) > 0)
        assert math.isclose(self.terminal_value, self.jumps[:, 1].sum(), rel_tol=1e-12, abs_tol=1e-300)


def _check(alpha, r, eps):
    if not 0 < alpha < 1:
        raise InvalidInput(f"alpha must lie in (0, 1), got {alpha}")
    if not np.all(np.asarray(r) > 0):
        raise InvalidInput("tilt rate r must be positive")
    if not eps > 0:
        raise InvalidInput("eps must be positive")


def dust_rate(alpha, r, eps):
    """Mean mass per unit local time of jumps smaller than eps."""
    r = np.asarray(r, dtype=float)
    x = eps * r
    exact = alpha * r ** (alpha - 1) * gammainc(1 - alpha, np.maximum(x, 1e-300))
    small = alpha * eps ** (1 - alpha) / ((1 - alpha) * math.gamma(1 - alpha)) * (1 - (1 - alpha) / (2 - alpha) * x)
    return np.where(x < 1e-6, small, exact)


def suggested_eps(alpha, blocks=500):
    """Truncation level leaving about ``blocks`` blocks per unit local time."""
    return float(min(1e-4, (blocks * math.gamma(1 - alpha)) ** (-1 / alpha)))


def jump_rate_above(alpha, eps):
    """Untilted stable Levy measure of (eps, inf) per unit local time."""
    return eps ** (-alpha) / math.gamma(1 - alpha)


CHUNK = 2_000_000


def stable_batch(rng, alpha, r, eps, local_time=None):
    """Tilted-subordinator range partitions, one per entry of r.

    Returns a PartitionBatch whose diversities are the local times of the
    jumps, plus the local times S.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    n = len(r)
    S = rng.exponential(1.0, size=n) / r**alpha if local_time is None else np.broadcast_to(local_time, (n,)).copy()
    counts = rng.poisson(S * jump_rate_above(alpha, eps))
    if counts.sum() > CHUNK and n > 1:
        cuts = np.searchsorted(np.cumsum(counts), np.arange(CHUNK, counts.sum(), CHUNK))
        edges = np.unique(np.concatenate([[0], np.maximum(cuts, 1), [n]]))
        parts = [_fill(rng, alpha, r[a:b], eps, S[a:b], counts[a:b]) for a, b in zip(edges[:-1], edges[1:])]
        return stack_batches(parts), S
    return _fill(rng, alpha, r, eps, S, counts), S


def _fill(rng, alpha, r, eps, S, counts):
    owner = np.repeat(np.arange(len(r)), counts)
    total = int(counts.sum())
    u = rng.uniform(size=total)
    sizes = eps * (1.0 - rng.uniform(size=total)) ** (-1.0 / alpha)
    keep = rng.uniform(size=total) < np.exp(-r[owner] * sizes)
    return _assemble(alpha, r, np.full(len(r), eps), S, owner[keep], u[keep] * S[owner[keep]], sizes[keep])


def _assemble(alpha, r, eps, S, owner, s, sizes):
    """Batch from jumps (owner, local time s, size), with dust below the per-partition eps."""
    n = len(r)
    order = np.lexsort((s, owner))
    owner, s, sizes = owner[order], s[order], sizes[order]
    rate = dust_rate(alpha, r, eps)
    prev = np.concatenate([[0.0], s[:-1]])
    first = np.ones(len(s), dtype=bool)
    first[1:] = owner[1:] != owner[:-1]
    prev[first] = 0.0
    gap = (s - prev) * rate[owner]
    last_s = np.zeros(n)
    if len(s):
        np.maximum.at(last_s, owner, s)
    tail = (S - last_s) * rate
    return PartitionBatch(n, owner, sizes, gap, s, tail, S.copy(), alpha)


def _refine(rng, alpha, base: PartitionBatch, r, S, eps, lo):
    """Add the jumps in [lo, eps) to each range; lo <= eps per partition.

    Jumps below eps are independent of those above it and of S, so lo may
    depend on the coarse draw.
    """
    lam = S * (jump_rate_above(alpha, lo) - jump_rate_above(alpha, eps))
    counts = rng.poisson(np.maximum(lam, 0.0))
    owner = np.repeat(np.arange(base.n), counts)
    q = (lo / eps)[owner] ** alpha
    sizes = lo[owner] * (1.0 - rng.uniform(size=len(owner)) * (1.0 - q)) ** (-1.0 / alpha)
    keep = rng.uniform(size=len(owner)) < np.exp(-r[owner] * sizes)
    owner, sizes = owner[keep], sizes[keep]
    s = rng.uniform(size=len(owner)) * S[owner]
    return _assemble(alpha, r, lo, S, np.concatenate([base.owner, owner]), np.concatenate([base.div, s]),
                     np.concatenate([base.mass, sizes]))


def pdip_batch(rng, alpha, variant, n, eps=DEFAULT_EPS, r=1.0):
    """n independent unit-mass PDIP(a, a) ('aa') or PDIP(a, 0) ('a0') draws.

    Blocks below eps after normalization are carried as dust.
    """
    if variant not in ("aa", "a0"):
        raise InvalidInput(f"unknown PDIP variant {variant!r}; use 'aa' or 'a0'")
    rr = np.full(n, float(r))
    base, S = stable_batch(rng, alpha, rr, eps)
    lead = rng.gamma(1 - alpha, 1.0 / r, size=n) if variant == "a0" else np.zeros(n)
    m = base.total_mass() + lead
    if np.any(m < 1):
        base = _refine(rng, alpha, base, rr, S, eps, eps * np.minimum(m, 1.0))
    if variant == "aa":
        return base.normalized()
    first = PartitionBatch(n, np.arange(n), lead, np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n), alpha)
    return concat_batches([first, base]).normalized()


def sample_stable_range(stream, alpha, r, eps=DEFAULT_EPS) -> SubordinatorRange:
    _check(alpha, r, eps)
    b, S = stable_batch(_rng(stream), alpha, np.array([float(r)]), eps)
    return SubordinatorRange(np.column_stack([b.div, b.mass]), float(S[0]), float(b.mass.sum()), float(r),
                             float(b.truncation_mass()[0]))


def sample_stable_partition(stream, alpha, r, eps=DEFAULT_EPS):
    """Jump-interval partition of the tilted subordinator run to its killing time."""
    _check(alpha, r, eps)
    b, _ = stable_batch(_rng(stream), alpha, np.array([float(r)]), eps)
    return b.partition(0)


def sample_pdip(stream, alpha, variant="aa", eps=DEFAULT_EPS):
    """One unit-mass PDIP(a, a) or PDIP(a, 0) partition."""
    _check(alpha, 1.0, eps)
    return pdip_batch(_rng(stream), alpha, variant, 1, eps).partition(0).replace(total_mass=1.0)
