"""De-Poissonization: unit-mass normalization under the time change rho(u).

With I(y) = int_0^y ||beta^z||^{-1} dz and rho its inverse, the
de-Poissonized process is beta^{rho(u)} / ||beta^{rho(u)}||.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .batch import PartitionBatch, stack_batches
from .kernel import DEFAULT_EPS, kappa0_batch, kappa_batch
from .partition import scale
from .randkit import InvalidInput
from .trace import EvolutionTrace


@dataclass
class TimeChange:
    """Trapezoid integral of 1/mass on a level grid and its inverse."""

    levels: np.ndarray
    integral: np.ndarray

    @classmethod
    def from_masses(cls, levels, masses):
        levels = np.asarray(levels, dtype=float)
        m = np.asarray(masses, dtype=float)
        if not len(m) or m[0] <= 0:
            raise InvalidInput("the initial state must have positive mass")
        pos = np.flatnonzero(m <= 0)
        k = pos[0] if len(pos) else len(m)
        inv = 1.0 / m[:k]
        integral = np.concatenate([[0.0], np.cumsum(0.5 * (inv[1:] + inv[:-1]) * np.diff(levels[:k]))])
        return cls(levels[:k], integral)

    def rho(self, u):
        """Level at de-Poissonized time u, by linear interpolation."""
        u = np.asarray(u, dtype=float)
        if np.any(u > self.integral[-1]) or np.any(u < 0):
            raise InvalidInput("u outside the range covered by the level grid")
        return np.interp(u, self.integral, self.levels)

    __call__ = rho

    def check(self):
        assert np.all(np.diff(self.integral) > 0)
        assert np.allclose(self.rho(self.integral), self.levels)


def time_change(trace: EvolutionTrace) -> TimeChange:
    return TimeChange.from_masses(trace.levels, trace.total_mass)


def normalize(beta):
    """beta / ||beta|| with total mass set to exactly 1."""
    m = beta.total_mass
    return scale(1.0 / m, beta).replace(total_mass=1.0)


def depoissonize(trace: EvolutionTrace) -> EvolutionTrace:
    """Normalized states on the u-grid given by the image of the level grid.

    A type-1 trace that dies inside the grid is cut at its last positive
    level and flagged ``truncated``.
    """
    tc = time_change(trace)
    k = len(tc.levels)
    m = trace.total_mass[:k]
    if k > 1 and np.any(np.abs(np.diff(m)) > 0.2 * m[:-1]):
        warnings.warn("mass changes by more than 20% between grid levels", stacklevel=2)
    states = [normalize(s) for s in trace.states[:k]]
    flags = dict(trace.flags)
    flags.update({"time": "u", "level_at_u": tc.levels.copy(), "truncated": k < len(trace.levels)})
    return EvolutionTrace(trace.alpha, tc.integral, states, trace.method, trace.type, flags)


def trace_rows(dp: EvolutionTrace, replicate=0):
    """CSV rows of a de-Poissonized trace with the columns of the level trace plus u and level_at_u."""
    rows = []
    for u, y, s in zip(dp.levels, dp.flags["level_at_u"], dp.states):
        div = s.terminal_diversity()
        rows.append((replicate, float(y), s.total_mass, s.n_blocks, s.leftmost_mass(), s.largest_mass(), div,
                     float(u), float(y)))
    return rows


# -- batches on a fixed u-grid ----------------------------------------------------

def depoissonized_at(rng, alpha, start: PartitionBatch, u_list, type=1, du=0.01, eps=DEFAULT_EPS,
                     mass_levels=(), max_steps=100_000):
    """Normalized states at each u in ``u_list`` for every partition of ``start``.

    The level grid is built per replicate with steps du * mass, so its image
    under I has spacing close to du; each u takes the state at the nearest
    knot.  Steps are cut to land on ``mass_levels``, and once every u is
    passed a replicate jumps from level to level in single kernel steps.
    Returns ({u: PartitionBatch}, masses, died): ``masses[:, k]`` is the
    total mass at ``mass_levels[k]`` and ``died``
    flags type-1 replicates that became empty before the last u or level.
    Replicates that die before some u get an empty state there.
    """
    u_list = sorted(float(u) for u in u_list)
    levels = np.asarray(sorted(float(v) for v in mass_levels), dtype=float)
    if any(u < 0 for u in u_list) or np.any(levels < 0):
        raise InvalidInput("u and levels must be nonnegative")
    n = start.n
    mass0 = start.total_mass()
    if np.any(mass0 <= 0):
        raise InvalidInput("the initial states must have positive mass")
    step = kappa_batch if type == 1 else kappa0_batch
    picked = {u: [] for u in u_list}
    masses = np.zeros((n, len(levels)))
    masses[:, levels == 0] = mass0[:, None]
    died = np.zeros(n, bool)
    idx = np.arange(n)
    state, I, Y = start, np.zeros(n), np.zeros(n)
    if 0.0 in picked:
        picked[0.0].append((idx, state))
    u_max = max([u for u in u_list if u > 0], default=0.0)
    y_max = float(levels.max()) if len(levels) else 0.0
    for _ in range(max_steps):
        if not len(idx) or (u_max <= 0 and y_max <= 0):
            break
        m_old = state.total_mass()
        pos = np.searchsorted(levels, Y, side="right")
        gap = np.append(levels, np.inf)[pos] - Y
        dy = np.where(I < u_max, np.minimum(du * m_old, gap), gap)
        new = step(rng, alpha, state, dy, eps)
        m_new = new.total_mass()
        dead = m_new <= 0
        I_new = I + np.where(dead, np.inf, 0.5 * dy * (1 / m_old + 1 / np.where(dead, 1.0, m_new)))
        Y_new = Y + dy
        for u in u_list:
            cross = (I < u) & (u <= I_new)
            if u > 0 and cross.any():
                near_old = (u - I < I_new - u) | dead
                for sel, src in ((cross & near_old, state), (cross & ~near_old, new)):
                    if sel.any():
                        picked[u].append((idx[sel], src.subset(np.flatnonzero(sel))))
        for k, v in enumerate(levels):
            hit = Y_new == v
            masses[idx[hit], k] = m_new[hit]
        died[idx[dead]] = True
        keep = np.flatnonzero(~dead & ((I_new < u_max) | (Y_new < y_max)))
        idx, state, I, Y = idx[keep], new.subset(keep), I_new[keep], Y_new[keep]
    else:
        raise RuntimeError("time change did not reach the requested u")
    out = {}
    for u in u_list:
        parts = picked[u]
        got = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, np.int64)
        miss = np.setdiff1d(np.arange(n), got)
        if len(miss):
            parts = parts + [(miss, PartitionBatch.empty(len(miss), alpha))]
        order = np.concatenate([p[0] for p in parts])
        b = stack_batches([p[1] for p in parts]).subset(np.argsort(order, kind="stable"))
        out[u] = b.normalized()
    return out, masses, died
