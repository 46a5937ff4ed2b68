"""Transition kernels of the type-1 and type-0 interval-partition evolutions.

A block of mass b run for a level increment y (rate r = 1/2y) leaves
nothing with probability exp(-b r); otherwise it leaves a leftmost block
L followed by a tilted-stable range partition with tilt r, which has the
law of Gamma(alpha, r) times an independent PDIP(alpha, alpha).

L has the mixture representation N ~ Poisson(b r) conditioned on N >= 1,
L | N ~ Gamma(N - alpha, r).

Dust (mass below the resolution) is carried as many infinitesimal blocks:
a dust stretch of mass g produces Poisson(r g) survivors, each with a
Gamma(1 - alpha, r) leftmost block.
The leftmost block of each partition is kept whatever its mass.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln, logsumexp

from .batch import PartitionBatch, concat_batches, merge_sources
from .partition import IntervalPartition
from .pdip import DEFAULT_EPS, stable_batch
from .randkit import InvalidInput, _rng
from .trace import BatchTrace, EvolutionTrace


def _check(alpha, y=1.0, b=1.0):
    if not 0 < alpha < 1:
        raise InvalidInput(f"alpha must lie in (0, 1), got {alpha}")
    if not np.all(np.asarray(y) > 0):
        raise InvalidInput("level increment must be positive")
    if not np.all(np.asarray(b) > 0):
        raise InvalidInput("block mass must be positive")


# -- the leftmost block L ---------------------------------------------------

def zero_truncated_poisson(rng, lam):
    """Poisson(lam) conditioned to be positive, via the first arrival time."""
    lam = np.asarray(lam, dtype=float)
    u = rng.uniform(size=lam.shape)
    first = -np.log1p(u * np.expm1(-lam))
    return 1 + rng.poisson(np.maximum(lam - first, 0.0))


def sample_L(rng, alpha, b, r):
    b, r = np.broadcast_arrays(np.asarray(b, float), np.asarray(r, float))
    n = zero_truncated_poisson(rng, b * r)
    return rng.gamma(n - alpha) / r


def sample_leftmost_L(stream, alpha, b, r):
    """One draw of the leftmost block mass after a step from a single block b."""
    _check(alpha, b=b)
    if not r > 0:
        raise InvalidInput("rate must be positive")
    return float(sample_L(_rng(stream), alpha, b, r))


def L_density(alpha, b, r, c, tol=1e-16):
    """Series density of L at the points c."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    out = np.zeros_like(c)
    pos = c > 0
    if not pos.any():
        return out
    z = b * r * r * c[pos]
    lognorm = -alpha * np.log(r) - b * r - np.log(-np.expm1(-b * r))
    base = (-1 - alpha) * np.log(c[pos]) - r * c[pos] + lognorm
    n_max = int(2 * np.sqrt(z.max()) + 40)
    for _ in range(20):
        n = np.arange(1, n_max + 1)[:, None]
        terms = n * np.log(z) - gammaln(n + 1) - gammaln(n - alpha)
        total = logsumexp(terms, axis=0)
        if np.all(terms[-1] - total < np.log(tol)):
            out[pos] = np.exp(base + total)
            return out
        n_max *= 2
    from .spindle import NumericError
    raise NumericError(f"L density series did not converge (b={b}, r={r})")


def L_laplace(alpha, b, r, lam):
    """Closed-form Laplace transform of L."""
    lam = np.asarray(lam, dtype=float)
    return ((r + lam) / r) ** alpha * np.expm1(b * r * r / (r + lam)) / np.expm1(b * r)


# -- one step of the kernels --------------------------------------------------

def _sources_step(rng, alpha, batch: PartitionBatch, r, eps, immigrant):
    """One kernel step for every partition of ``batch`` with per-partition rate r."""
    n = batch.n
    r = np.broadcast_to(np.asarray(r, dtype=float), (n,))
    nb = len(batch.mass)
    # surviving blocks
    p_surv = -np.expm1(-batch.mass * r[batch.owner])
    surv = np.flatnonzero(rng.uniform(size=nb) < p_surv)
    s_owner = batch.owner[surv]
    s_key = 2 * surv + 1
    s_L = sample_L(rng, alpha, batch.mass[surv], r[s_owner])
    # survivors from dust before each block and after the last one
    gap_cnt = rng.poisson(batch.gap * r[batch.owner])
    tail_cnt = rng.poisson(batch.tail * r)
    d_owner = np.concatenate([np.repeat(batch.owner, gap_cnt), np.repeat(np.arange(n), tail_cnt)])
    d_key = np.concatenate([np.repeat(2 * np.arange(nb), gap_cnt), np.full(int(tail_cnt.sum()), 2 * nb + 2)])
    d_L = rng.gamma(1 - alpha, size=len(d_owner)) / r[d_owner]
    owner = np.concatenate([s_owner, d_owner])
    key = np.concatenate([s_key, d_key])
    L = np.concatenate([s_L, d_L])
    has_L = np.ones(len(owner), bool)
    if immigrant:
        owner = np.concatenate([np.arange(n), owner])
        key = np.concatenate([np.full(n, -1), key])
        L = np.concatenate([np.zeros(n), L])
        has_L = np.concatenate([np.zeros(n, bool), has_L])
    order = np.lexsort((key, owner))
    owner, L, has_L = owner[order], L[order], has_L[order]
    m = len(owner)
    stable, _ = stable_batch(rng, alpha, r[owner], eps)
    lead_idx = np.flatnonzero(has_L)
    lead = PartitionBatch(m, lead_idx, L[lead_idx], np.zeros(len(lead_idx)), np.zeros(len(lead_idx)),
                          np.zeros(m), np.zeros(m), alpha)
    src = concat_batches([lead, stable])
    return merge_sources(src, owner, n).drop_below(eps, keep_first=True)


def kappa_batch(rng, alpha, batch, y, eps=DEFAULT_EPS):
    """Type-1 kernel step of level increment y (scalar or per partition)."""
    return _sources_step(rng, alpha, batch, 1.0 / (2.0 * np.asarray(y, dtype=float)), eps, immigrant=False)


def kappa0_batch(rng, alpha, batch, y, eps=DEFAULT_EPS):
    """Type-0 kernel step: a fresh tilted-stable partition is prepended."""
    return _sources_step(rng, alpha, batch, 1.0 / (2.0 * np.asarray(y, dtype=float)), eps, immigrant=True)


def sample_mu(stream, alpha, b, r, eps=DEFAULT_EPS) -> IntervalPartition:
    """The image of a single block b under one step at rate r."""
    _check(alpha, b=b)
    if not r > 0:
        raise InvalidInput("rate must be positive")
    start = PartitionBatch.single_blocks([b], alpha)
    return _sources_step(_rng(stream), alpha, start, r, eps, immigrant=False).partition(0)


def kappa_step(stream, alpha, beta: IntervalPartition, y, eps=DEFAULT_EPS) -> IntervalPartition:
    _check(alpha, y)
    return kappa_batch(_rng(stream), alpha, PartitionBatch.from_partitions([beta], alpha), y, eps).partition(0)


def kappa0_step(stream, alpha, beta: IntervalPartition, y, eps=DEFAULT_EPS) -> IntervalPartition:
    _check(alpha, y)
    return kappa0_batch(_rng(stream), alpha, PartitionBatch.from_partitions([beta], alpha), y, eps).partition(0)


# -- evolutions ---------------------------------------------------------------

def _check_levels(levels):
    levels = np.asarray(levels, dtype=float)
    if levels.ndim != 1 or len(levels) == 0 or levels[0] != 0 or np.any(np.diff(levels) <= 0):
        raise InvalidInput("levels must be strictly increasing and start at 0")
    return levels


def evolve_batch(rng, alpha, start: PartitionBatch, levels, type=1, eps=DEFAULT_EPS, keep_states=True):
    """Iterate the kernel over a level grid for every partition of ``start``."""
    levels = _check_levels(levels)
    step = kappa_batch if type == 1 else kappa0_batch
    state = start
    states = [state]
    for dy in np.diff(levels):
        state = step(rng, alpha, state, dy, eps)
        states.append(state if keep_states else None)
    if not keep_states:
        states[-1] = state
    return BatchTrace(alpha, levels, states, "kernel", type)


def evolve_by_kernel(stream, alpha, beta0: IntervalPartition, levels, type=1, eps=DEFAULT_EPS) -> EvolutionTrace:
    if type not in (0, 1):
        raise InvalidInput("type must be 0 or 1")
    _check(alpha)
    start = PartitionBatch.from_partitions([beta0], alpha)
    return evolve_batch(_rng(stream), alpha, start, levels, type, eps).trace(0)
