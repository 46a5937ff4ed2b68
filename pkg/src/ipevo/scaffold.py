"""Poissonian construction: scaffolding, spindles, clades, skewers.

The scaffolding is a spectrally positive Stable(1+a) Levy process.  Jumps
larger than a cutoff z_c arrive as a Poisson process with Pareto sizes and
are compensated by a linear drift; the omitted small jumps are replaced by
a Brownian part with the same variance.  Between jumps the path is a
Brownian bridge with drift, whose extrema and local times are sampled
exactly given the endpoints.

Many independent paths ("walkers") are advanced in lockstep.  A walker
carries the concatenation of the clades of one initial partition: block b
starts a clade with an initial jump of height zeta0 (the absorption time of
a BESQ(-2a) spindle from b), and the next clade starts when the path
returns to level 0.  Dust of mass g between blocks is a limit of many
vanishing clades; it is represented by letting the path reflect at 0 until
it has accumulated g / (2a) of downward push.

Only levels up to ``top`` matter, so any excursion above ``top`` is cut out:
the path creeps down, so it re-enters at exactly ``top``.  Far from the
levels the cutoff is coarser; a walker that approaches a level is
restarted at the edge of its band with a finer cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .batch import PartitionBatch
from .partition import IntervalPartition
from .randkit import InvalidInput, RandomStream, _rng
from .spindle import (SpindleRealization, absorption_time, euler_absorption, bridge_to_zero_step, compensator_slope,
                      laplace_exponent_inverse, lifetime_tail, small_spindle_mass_rate, stable_constant)
from .trace import BatchTrace


class ResourceError(RuntimeError):
    """Raised when a path exceeds its step budget."""


@dataclass(frozen=True)
class ScaffoldParams:
    alpha: float
    z_cutoff: float

    @property
    def rate(self):
        return float(lifetime_tail(self.alpha, self.z_cutoff))

    @property
    def slope(self):
        return float(compensator_slope(self.alpha, self.z_cutoff))

    @property
    def sigma2(self):
        a = self.alpha
        return a * (1 + a) * stable_constant(a) * self.z_cutoff ** (1 - a) / (1 - a)

    @property
    def dim(self):
        return 4 + 2 * self.alpha

    @property
    def dust_rate(self):
        return float(small_spindle_mass_rate(self.alpha, self.z_cutoff))


def default_cutoff(levels, alpha=0.5):
    """Base cutoff: a fraction of the smallest level gap, smaller for small alpha.

    Masses below the cutoff are not resolved individually; the fraction of
    such masses scales like z^alpha, hence the alpha dependence.
    """
    lv = np.asarray(levels, dtype=float)
    pos = lv[lv > 0]
    gap = 1.0
    if len(pos):
        gaps = np.diff(np.concatenate([[0.0], np.sort(pos)]))
        gap = float(gaps[gaps > 0].min())
    return gap * min(2e-3, (0.03 * math.gamma(1 + alpha)) ** (1 / alpha))


def positive_stable(rng, rho, size):
    """Kanter's representation: E exp(-t S) = exp(-t^rho)."""
    u = rng.uniform(size=size)
    e = rng.exponential(size=size)
    a = (np.sin(rho * np.pi * u) ** (rho / (1 - rho)) * np.sin((1 - rho) * np.pi * u)
         / np.sin(np.pi * u) ** (1 / (1 - rho)))
    return (a / e) ** ((1 - rho) / rho)


def first_passage_time(rng, alpha, depth):
    """Time for the scaffolding to first descend by ``depth``."""
    depth = np.asarray(depth, dtype=float)
    rho = 1 / (1 + alpha)
    c = float(laplace_exponent_inverse(alpha, 1.0))
    return (c * depth) ** (1 / rho) * positive_stable(rng, rho, depth.shape)


def _local_cutoff(x, levels, z_base, far):
    """Per-walker cutoff ``far`` times the distance to the nearest level or to
    zero, and the band of heights where it stays valid."""
    below, above = np.zeros(len(x)), np.full(len(x), np.inf)
    if len(levels):
        i = np.searchsorted(levels, x, side="right")
        below = np.where(i > 0, levels[np.maximum(i - 1, 0)], 0.0)
        above = np.where(i < len(levels), levels[np.minimum(i, len(levels) - 1)], np.inf)
    dist = np.minimum(x - below, above - x)
    zc = np.maximum(far * dist, z_base)
    coarse = zc > z_base
    lo = np.where(coarse, below + dist / 2, -np.inf)
    hi = np.where(coarse, above - dist / 2, np.inf)
    return zc, lo, hi


def spindle_values(rng, d, lifetime, heights, start=None):
    """Values of BESQ(d) bridges to zero at increasing heights.

    Rows of ``heights`` are increasing with NaN for unused entries; the
    bridge of row k runs from ``start[k]`` (default 0) at height 0 to 0 at
    ``lifetime[k]``.
    """
    n, L = heights.shape
    out = np.full((n, L), np.nan)
    prev_h = np.zeros(n)
    prev_v = np.zeros(n) if start is None else np.asarray(start, dtype=float).copy()
    for j in range(L):
        h = heights[:, j]
        ok = np.isfinite(h)
        if not ok.any():
            continue
        v = bridge_to_zero_step(rng, d, prev_v[ok], lifetime[ok] - prev_h[ok], h[ok] - prev_h[ok])
        out[ok, j] = v
        prev_h[ok] = h[ok]
        prev_v[ok] = v
    return out


@dataclass
class ScaffoldOutput:
    levels: np.ndarray
    n: int
    events: list  # per level: dict of arrays walker, key, mass, ell
    ell: np.ndarray  # (n, levels) total local time
    peak: np.ndarray
    done: np.ndarray
    time: np.ndarray
    steps: int
    jumps: list = field(default_factory=list)  # optional full record


def run_scaffold(rng, alpha, levels, z_cutoff, top, x0, blocks: PartitionBatch | None = None, chunk=16,
                 budget=2**17, far=0.01,
                 max_iter=10**6, track_time=False, record=False, virtual_first=True, time_cap=np.inf):
    """Advance walkers until each has exhausted its clades.

    ``levels`` are the positive heights at which skewers are taken, all
    below ``top``.  ``x0`` is each walker's starting height; ``blocks``
    (optional) holds the initial partition of each walker.  With
    ``track_time`` the scaffolding time is accumulated, and walkers whose
    time exceeds ``time_cap`` are stopped.
    """
    prm = ScaffoldParams(alpha, z_cutoff)
    d = prm.dim
    levels = np.asarray(levels, dtype=float)
    L = len(levels)
    if L and (levels.min() <= 0 or levels.max() >= top):
        raise InvalidInput("levels must lie in (0, top)")
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    if blocks is None:
        blocks = PartitionBatch.empty(n, alpha)
    blocks = blocks.drop_below(z_cutoff)
    st = blocks.starts()
    nb = len(blocks.mass)
    # initial spindles of all blocks
    zeta0 = absorption_time(rng, alpha, blocks.mass) if nb else np.zeros(0)
    if nb and L:
        hts = np.where(levels[None, :] < zeta0[:, None], np.broadcast_to(levels, (nb, L)), np.nan)
        init_vals = spindle_values(rng, d, zeta0, hts, start=blocks.mass)
    else:
        init_vals = np.zeros((nb, L))
    gap_after = np.concatenate([blocks.gap[1:], [0.0]]) if nb else np.zeros(0)
    last = np.zeros(nb, bool)
    if nb:
        ends = st[1:][st[1:] > st[:-1]] - 1
        last[ends] = True
        gap_after[last] = blocks.tail[blocks.owner[last]]
    X = x0.copy()
    k = st[:-1].copy()
    end = st[1:].copy()
    has_blocks = end > k
    R = np.where(has_blocks, blocks.gap[np.minimum(k, max(nb - 1, 0))] if nb else 0.0, blocks.tail) / (2 * alpha)
    done = np.zeros(n, bool)
    ell = np.zeros((n, L))
    seen = np.zeros((n, L), bool)
    peak = x0.copy()
    time = np.zeros(n)
    ev = [{"w": [], "key": [], "mass": [], "ell": []} for _ in range(L)]
    rec = []

    def emit(j, w, key, mass, el):
        if len(w):
            ev[j]["w"].append(w)
            ev[j]["key"].append(key)
            ev[j]["mass"].append(mass)
            ev[j]["ell"].append(el)

    def start_blocks(ws, e, key, el_rows):
        """Start the next clade for walkers ws; returns new heights."""
        kk = k[ws]
        z0 = zeta0[kk]
        for j in range(L):
            hit = levels[j] < z0
            if hit.any():
                emit(j, ws[hit], key[hit], init_vals[kk[hit], j], el_rows[hit, j])
                seen[ws[hit], j] = True
        R[ws] = gap_after[kk] / (2 * alpha)
        k[ws] = kk + 1
        if record:
            rec.append(("start", ws.copy(), key.copy(), z0.copy(), blocks.mass[kk].copy()))
        return z0 + e

    def consume(ws, c, e, key, el_rows):
        """Push of depth c at level 0: use dust, else start the next clade."""
        newX = np.zeros(len(ws))
        fits = R[ws] >= c
        R[ws[fits]] -= c[fits]
        newX[fits] = e[fits]
        rest = ~fits
        R[ws[rest]] = 0.0
        more = rest & (k[ws] < end[ws])
        if more.any():
            newX[more] = start_blocks(ws[more], e[more], key[more], el_rows[more])
        fin = rest & ~more
        done[ws[fin]] = True
        return newX

    # walkers starting at zero with no leading dust start their first clade now
    init = np.flatnonzero((X <= 0) & (R <= 0))
    if len(init):
        X[init] = consume(init, np.zeros(len(init)) + 1e-300, np.zeros(len(init)), np.full(len(init), -1),
                          ell[init])
    peak = np.maximum(peak, np.minimum(X, top))
    X = np.minimum(X, top)
    it = 0
    stride = 2 * 8192 + 2
    while True:
        A = np.flatnonzero(~done)
        if not len(A):
            break
        K = int(min(max(budget // len(A), chunk), 8192))
        kk = np.arange(K)[None, :]
        it += 1
        if it > max_iter:
            raise ResourceError(f"scaffold exceeded {max_iter} chunks with {len(A)} active walkers")
        m = len(A)
        rows = np.arange(m)
        X0 = X[A]
        zc, lo_ok, hi_ok = _local_cutoff(X0, levels, z_cutoff, far)
        cst = stable_constant(alpha)
        rate_w = alpha * cst * zc ** (-1 - alpha)
        slope_w = (1 + alpha) * cst * zc ** (-alpha)
        s2_w = alpha * (1 + alpha) * cst * zc ** (1 - alpha) / (1 - alpha)
        tau = rng.exponential(size=(m, K)) / rate_w[:, None]
        dQ = -slope_w[:, None] * tau + np.sqrt(s2_w[:, None] * tau) * rng.standard_normal((m, K))
        J = zc[:, None] * (1.0 - rng.uniform(size=(m, K))) ** (-1.0 / (1 + alpha))
        Q = X0[:, None] + np.cumsum(dQ + J, axis=1) - J
        P = Q - dQ
        Top = Q + J
        s2 = s2_w[:, None]
        v2 = 2 * s2 * tau
        spread = np.abs(Q - P)
        M = 0.5 * (P + Q + np.sqrt(spread**2 - v2 * np.log1p(-rng.uniform(size=(m, K)))))
        mn = 0.5 * (P + Q - np.sqrt(spread**2 - v2 * np.log1p(-rng.uniform(size=(m, K)))))
        # reflection below top: excursions above it are cut out
        seq = np.empty((m, 2 * K))
        seq[:, 0::2] = M - top
        seq[:, 1::2] = Top - top
        C = np.maximum.accumulate(np.maximum(seq, 0.0), axis=1)
        Dseg, Djmp = C[:, 0::2], C[:, 1::2]
        Dprev = np.concatenate([np.zeros((m, 1)), Djmp[:, :-1]], axis=1)
        Ymin = mn - Dprev
        # reflection at level zero, paid for with dust
        U = np.maximum.accumulate(np.maximum(-Ymin, 0.0), axis=1)
        Uprev = np.concatenate([np.zeros((m, 1)), U[:, :-1]], axis=1)
        il = np.where((Ymin < 0).any(1), np.argmax(Ymin < 0, axis=1), K)
        Ys = P - Dprev + Uprev
        Ye = Q - Dseg + U
        Ymax = M - Dprev + Uprev
        Ymin = np.maximum(Ymin + Uprev, 0.0)
        Jto = Top - Dseg + U
        # after the first push at zero, a touch at the top ends the chunk there
        late = kk >= il[:, None]
        top_seg = late & ((M - Dprev >= top) | (Ymax >= top))
        top_jmp = late & ((Top - Dseg > top) | (Jto > top))
        t_top = np.minimum(np.where(top_seg.any(1), np.argmax(top_seg, axis=1), K),
                           np.where(top_jmp.any(1), np.argmax(top_jmp, axis=1) + 1, K))
        # a coarse cutoff is valid only away from the levels: restart where the band is left
        out_seg = (Ymin < lo_ok[:, None]) | (Ymax > hi_ok[:, None])
        out_jmp = (Jto > hi_ok[:, None]) | (Ye < lo_ok[:, None])
        t_seg = np.where(out_seg.any(1), np.argmax(out_seg, axis=1), K)
        t_jmp = np.where(out_jmp.any(1), np.argmax(out_jmp, axis=1) + 1, K)
        ex = U > R[A][:, None]
        e = np.where(ex.any(1), np.argmax(ex, axis=1), K)
        f = np.minimum(np.minimum(e, t_top), np.minimum(t_seg, t_jmp))
        seg_exit = (t_seg == f) & (t_seg < t_jmp) & (f < K)
        floor = (e == f) & ~seg_exit & (f < K)
        fc = np.minimum(f, K - 1)
        at_top = (t_top == f) & ~seg_exit & ~floor & (f < K) & top_seg[rows, fc]
        Ymax = np.minimum(Ymax, top)
        seg_ok = kk < f[:, None]
        jump_ok = seg_ok
        base_key = it * stride
        # local times
        lt = np.zeros((m, K, L))
        lo = np.minimum(Ys, Ye)
        hi = np.maximum(Ys, Ye)
        for j in range(L):
            y = levels[j]
            pos = seg_ok & (((lo <= y) & (y <= hi)) | ((y > hi) & (Ymax >= y)) | ((y < lo) & (Ymin <= y)))
            if pos.any():
                a = np.abs(y - Ys[pos]) + np.abs(y - Ye[pos])
                V = -v2[pos] * np.log1p(-rng.uniform(size=int(pos.sum())))
                lt[pos, j] = (np.sqrt(a * a + V) - a) / np.broadcast_to(s2, pos.shape)[pos]
        cum_lt = np.cumsum(lt, axis=1)
        ell_A = ell[A]
        # virtual first crossings by the diffusive part
        if virtual_first and L:
            for j in range(L):
                y = levels[j]
                up = seg_ok & (((Ys < y) & (y <= Ye)) | ((Ys < y) & (Ye < y) & (Ymax >= y))
                               | ((Ys > y) & (Ye > y) & (Ymin < y)))
                strad = jump_ok & (Ye < y) & (y < Jto)
                fs = np.where(up.any(1), np.argmax(up, axis=1), K + 1)
                fj = np.where(strad.any(1), np.argmax(strad, axis=1), K + 1)
                vw = (~seen[A, j]) & (fs <= fj) & (fs < K)
                if vw.any():
                    r = np.flatnonzero(vw)
                    zeta = zc[r] * rng.uniform(size=len(r)) ** (1 / (1 - alpha))
                    u = zeta * np.sqrt(rng.uniform(size=len(r)))
                    mass = rng.gamma(d / 2, size=len(r)) * 2 * u * (zeta - u) / zeta
                    prev = np.where(fs[r] > 0, cum_lt[r, np.maximum(fs[r] - 1, 0), j], 0.0)
                    emit(j, A[r], base_key + 2 * fs[r], mass, ell_A[r, j] + prev)
                    seen[A[r], j] = True
        # straddling jumps
        if L:
            jr, jc = np.nonzero(jump_ok & (Ye < levels[-1]) & (Jto > levels[0]))
            if len(jr):
                q = Ye[jr, jc]
                tp = Jto[jr, jc]
                inside = (levels[None, :] > q[:, None]) & (levels[None, :] < tp[:, None])
                hts = np.where(inside, levels[None, :] - q[:, None], np.nan)
                vals = spindle_values(rng, d, J[jr, jc], hts)
                for j in range(L):
                    ok = inside[:, j]
                    if ok.any():
                        w = A[jr[ok]]
                        emit(j, w, base_key + 2 * jc[ok] + 1, vals[ok, j], ell_A[jr[ok], j] + cum_lt[jr[ok], jc[ok], j])
                        seen[w, j] = True
                if record:
                    rec.append(("jump", A[jr], base_key + 2 * jc + 1, q, J[jr, jc]))
        if track_time:
            time[A] += np.where(kk <= f[:, None], tau, 0.0).sum(axis=1)
            over = np.where(jump_ok & (Jto > top), Jto - top, 0.0)
            if (over > 0).any():
                time[A] += np.where(over > 0, first_passage_time(rng, alpha, np.maximum(over, 1e-300)), 0.0).sum(1)
        pk = np.maximum(np.where(seg_ok, Ymax, -np.inf).max(axis=1), np.where(jump_ok, Jto, -np.inf).max(axis=1))
        peak[A] = np.maximum(peak[A], np.minimum(pk, top))
        ell[A] += lt.sum(axis=1)
        # new heights and dust
        fm1 = np.maximum(f - 1, 0)
        newX = np.where(f > 0, np.minimum(Jto[rows, fm1], top), X0)
        if seg_exit.any():
            bound = np.where(Ymax[rows, fc] > hi_ok, hi_ok, lo_ok)
            newX = np.where(seg_exit, bound, newX)
        newX = np.where(at_top, top, newX)
        peak[A[at_top]] = top
        used = np.where(f > 0, U[rows, fm1], 0.0)
        R[A] = R[A] - used
        fl = np.flatnonzero(floor)
        if len(fl):
            ws = A[fl]
            ff = f[fl]
            R[ws] = 0.0
            more = k[ws] < end[ws]
            done[ws[~more]] = True
            wm, fm = ws[more], ff[more]
            if len(wm):
                rm = fl[more]
                prev = np.where(fm[:, None] > 0, cum_lt[rm, np.maximum(fm - 1, 0), :], 0.0)
                el_rows = ell_A[rm] + prev
                # the path is at zero when the dust runs out: the next clade starts there
                xs = start_blocks(wm, np.zeros(len(wm)), base_key + 2 * fm, el_rows)
                if track_time:
                    over = xs - top
                    time[wm] += np.where(over > 0, first_passage_time(rng, alpha, np.maximum(over, 1e-300)), 0.0)
                peak[wm] = np.maximum(peak[wm], np.minimum(xs, top))
                newX[rm] = np.minimum(xs, top)
        X[A] = newX
        if track_time:
            done[A[time[A] > time_cap]] = True
    events = []
    for j in range(L):
        e = ev[j]
        if e["w"]:
            events.append({key: np.concatenate(e[key]) for key in e})
        else:
            events.append({"w": np.zeros(0, np.int64), "key": np.zeros(0, np.int64), "mass": np.zeros(0),
                           "ell": np.zeros(0)})
    return ScaffoldOutput(levels, n, events, ell, peak, done, time, it, rec)


def skewers(out: ScaffoldOutput, alpha, z_cutoff, eps):
    """One PartitionBatch per level from the recorded straddles."""
    rate = ScaffoldParams(alpha, z_cutoff).dust_rate
    res = []
    for j in range(len(out.levels)):
        e = out.events[j]
        order = np.lexsort((e["key"], e["w"]))
        w, mass, el = e["w"][order], e["mass"][order], e["ell"][order]
        prev = np.concatenate([[0.0], el[:-1]])
        first = np.ones(len(w), bool)
        first[1:] = w[1:] != w[:-1]
        prev[first] = 0.0
        gap = np.maximum(el - prev, 0.0) * rate
        last_ell = np.zeros(out.n)
        if len(w):
            np.maximum.at(last_ell, w, el)
        tail = np.maximum(out.ell[:, j] - last_ell, 0.0) * rate
        b = PartitionBatch(out.n, w, mass, gap, el, tail, out.ell[:, j].copy(), alpha)
        res.append(b.drop_below(eps, keep_first=True))
    return res


def _split_levels(levels):
    levels = np.asarray(levels, dtype=float)
    if levels.ndim != 1 or len(levels) == 0 or levels[0] != 0 or np.any(np.diff(levels) <= 0):
        raise InvalidInput("levels must be strictly increasing and start at 0")
    return levels, levels[1:]


def _top(levels, z_cutoff):
    return float(levels.max()) * 1.02 + 20 * z_cutoff


def type1_batch(rng, alpha, start: PartitionBatch, levels, z_cutoff=None, eps=1e-8, chunk=32):
    levels, pos = _split_levels(levels)
    z_cutoff = default_cutoff(levels, alpha) if z_cutoff is None else z_cutoff
    if not len(pos):
        return BatchTrace(alpha, levels, [start], "scaffold", 1)
    out = run_scaffold(rng, alpha, pos, z_cutoff, _top(pos, z_cutoff), np.zeros(start.n), start, chunk=chunk)
    return BatchTrace(alpha, levels, [start] + skewers(out, alpha, z_cutoff, eps), "scaffold", 1)


def type0_batch(rng, alpha, start: PartitionBatch, levels, z_cutoff=None, eps=1e-8, chunk=32):
    """Type-0: a descent from above the grid, then the clades of ``start``."""
    levels, pos = _split_levels(levels)
    z_cutoff = default_cutoff(levels, alpha) if z_cutoff is None else z_cutoff
    if not len(pos):
        return BatchTrace(alpha, levels, [start], "scaffold", 0)
    top = _top(pos, z_cutoff)
    out = run_scaffold(rng, alpha, pos, z_cutoff, top, np.full(start.n, top), start, chunk=chunk)
    return BatchTrace(alpha, levels, [start] + skewers(out, alpha, z_cutoff, eps), "scaffold", 0)


def type1_evolution_scaffold(stream, alpha, beta0: IntervalPartition, levels, z_cutoff=None, eps=1e-8):
    start = PartitionBatch.from_partitions([beta0], alpha)
    return type1_batch(_rng(stream), alpha, start, levels, z_cutoff, eps).trace(0)


def type0_evolution_scaffold(stream, alpha, beta0: IntervalPartition, levels, z_cutoff=None, eps=1e-8, j=None):
    """Type-0 trace; the descent component is independent of the anchor j > max level."""
    levels = np.asarray(levels, dtype=float)
    if j is not None and j <= levels.max():
        raise InvalidInput("anchor j must exceed the largest level")
    start = PartitionBatch.from_partitions([beta0], alpha)
    return type0_batch(_rng(stream), alpha, start, levels, z_cutoff, eps).trace(0)


# -- single clades with explicit points -----------------------------------------

DEFAULT_H_ELL = 1e-3


@dataclass
class CladeSystem:
    """One clade: an initial spindle, then Poisson spindles above the cutoff.

    The scaffolding is X(t) = x0 + sum of jump heights up to t - slope * t;
    the jump at time 0 is the lifetime of the initial spindle and the clade
    ends at the first time T where X returns to x0.  Jumps past ``ceiling``
    are cut back to it (``excess``), which leaves every level below the
    ceiling unchanged in law since the path creeps down.
    """

    times: np.ndarray
    lifetimes: np.ndarray
    initial_spindle: SpindleRealization
    z_cutoff: float
    compensator_slope: float
    T: float
    x0: float
    alpha: float
    stream: RandomStream
    excess: np.ndarray = None
    ceiling: float = np.inf
    _spindles: dict = field(default_factory=dict, repr=False)

    def spindle(self, i) -> SpindleRealization:
        """Spindle of the i-th jump; i = 0 is the initial spindle."""
        if i == 0:
            return self.initial_spindle
        f = self._spindles.get(i)
        if f is None:
            f = SpindleRealization(float(self.lifetimes[i]), 0.0, 4 + 2 * self.alpha,
                                   self.stream.child("spindle", i), self.alpha)
            self._spindles[i] = f
        return f

    @property
    def points(self):
        return [(float(t), self.spindle(i)) for i, t in enumerate(self.times)]

    def __post_init__(self):
        if self.excess is None:
            self.excess = np.zeros(len(self.lifetimes))

    @property
    def heights(self):
        """Jump heights after cutting at the ceiling."""
        return self.lifetimes - self.excess

    def before_jumps(self):
        """X(t_i-) for every jump."""
        cum = np.concatenate([[0.0], np.cumsum(self.heights)[:-1]])
        return self.x0 + cum - self.compensator_slope * self.times

    def X(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="right")
        cum = np.concatenate([[0.0], np.cumsum(self.heights)])
        return self.x0 + cum[k] - self.compensator_slope * np.minimum(t, self.T)

    @property
    def maximum(self):
        return float((self.before_jumps() + self.heights).max())

    def check(self):
        assert self.times[0] == 0 and np.all(np.diff(self.times) > 0)
        assert np.all(self.lifetimes[1:] > self.z_cutoff)
        assert np.all(self.before_jumps()[1:] > self.x0)
        assert abs(float(self.X(self.T)) - self.x0) < 1e-9 * max(1.0, self.maximum)


def build_clade(stream, alpha, b, z_cutoff=None, level_grid=(), x0=0.0, max_jumps=10**7, ceiling=None) -> CladeSystem:
    """Clade of a block of mass b, with jumps below ``z_cutoff`` replaced by their drift.

    The ceiling defaults to twice the largest level of ``level_grid`` (no
    ceiling without a grid).
    """
    if not 0 < alpha < 1:
        raise InvalidInput(f"alpha must lie in (0, 1), got {alpha}")
    if not b > 0:
        raise InvalidInput("block mass must be positive")
    grid = np.asarray(level_grid, dtype=float)
    if z_cutoff is None:
        z_cutoff = 1e-4 * float(grid.max()) if len(grid) and grid.max() > 0 else 1e-4
    if not z_cutoff > 0:
        raise InvalidInput("z_cutoff must be positive")
    if len(grid) > 1 and z_cutoff > 0.01 * np.diff(np.sort(grid)).min():
        import warnings
        warnings.warn("z_cutoff is not small compared with the level gaps", stacklevel=2)
    stream = stream if isinstance(stream, RandomStream) else RandomStream(int(stream))
    rng = stream.child("scaffold").generator()
    if ceiling is None:
        ceiling = x0 + 2 * float(grid.max()) if len(grid) and grid.max() > x0 else np.inf
    zeta0 = float(absorption_time(stream.child("initial", "lifetime").generator(), alpha, b))
    f0 = SpindleRealization(zeta0, b, 4 + 2 * alpha, stream.child("initial", "path"), alpha)
    rate = float(lifetime_tail(alpha, z_cutoff))
    slope = float(compensator_slope(alpha, z_cutoff))
    times, sizes, cuts = [np.zeros(1)], [np.array([zeta0])], [np.array([max(x0 + zeta0 - ceiling, 0.0)])]
    t, x, count = 0.0, min(x0 + zeta0, ceiling), 1
    chunk = 256
    while True:
        tau = rng.exponential(size=chunk) / rate
        J = z_cutoff * (1.0 - rng.uniform(size=chunk)) ** (-1.0 / (1 + alpha))
        tt = t + np.cumsum(tau)
        # heights after each jump, reflected below the ceiling
        free = x + np.cumsum(J) - slope * (tt - t)
        excess = np.maximum.accumulate(np.maximum(free - ceiling, 0.0))
        post = free - excess
        cut = np.diff(np.concatenate([[0.0], excess]))
        pre = post - J + cut
        hit = np.flatnonzero(pre <= x0)
        if len(hit):
            k = hit[0]
            prev_t = tt[k - 1] if k else t
            prev_x = post[k - 1] if k else x
            times.append(tt[:k])
            sizes.append(J[:k])
            cuts.append(cut[:k])
            T = prev_t + (prev_x - x0) / slope
            break
        times.append(tt)
        sizes.append(J)
        cuts.append(cut)
        t, x = tt[-1], post[-1]
        count += chunk
        if count > max_jumps:
            err = ResourceError(f"clade did not end within {max_jumps} jumps (height {x:.4g}, time {t:.4g})")
            err.partial = (t, x, count)
            raise err
        chunk = min(2 * chunk, 1 << 16)
    f0.refine([y - x0 for y in grid if 0 < y - x0 < zeta0])
    return CladeSystem(np.concatenate(times), np.concatenate(sizes), f0, float(z_cutoff), slope, float(T),
                       float(x0), alpha, stream, np.concatenate(cuts), float(ceiling))


def _occupation(clade: CladeSystem, y, t, h):
    """Time before t spent by X in [y, y + h), divided by h."""
    pre = clade.before_jumps()
    starts = pre + clade.heights
    ends = np.concatenate([pre[1:], [clade.x0]])
    t0 = clade.times
    t1 = np.concatenate([clade.times[1:], [clade.T]])
    lim = np.clip(t, t0, t1)
    ends = starts - clade.compensator_slope * (lim - t0)
    overlap = np.clip(np.minimum(starts, y + h) - np.maximum(ends, y), 0.0, None)
    return float(overlap.sum() / clade.compensator_slope / h)


def local_time(clades, y, t=np.inf, h=DEFAULT_H_ELL):
    """Occupation-density estimate of the local time at level y up to time t.

    Time runs through the clades in order, each starting where the last ended.
    """
    if isinstance(clades, CladeSystem):
        clades = [clades]
    total, offset = 0.0, 0.0
    for c in clades:
        if t <= offset:
            break
        total += _occupation(c, y, t - offset, h)
        offset += c.T
    return total


def skewer(clades, y, eps=0.0, h=DEFAULT_H_ELL) -> IntervalPartition:
    """Blocks f_i(y - X(t_i-)) for every jump across level y, in time order.

    Diversities are occupation-density local times and are estimates.
    """
    if y < 0:
        raise InvalidInput("level must be nonnegative")
    if isinstance(clades, CladeSystem):
        clades = [clades]
    alpha = clades[0].alpha if clades else None
    masses, divs = [], []
    offset, div_off = 0.0, 0.0
    for c in clades:
        pre = c.before_jumps()
        top = pre + c.heights
        hit = (pre < y) & (y < top)
        hit[0] = pre[0] <= y < top[0]
        for i in np.flatnonzero(hit):
            masses.append(c.spindle(int(i)).value_at(y - pre[i]))
            divs.append(div_off + _occupation(c, y, c.times[i], h))
        div_off += _occupation(c, y, c.T, h)
        offset += c.T
    m = np.asarray(masses, dtype=float)
    k = len(m)
    b = PartitionBatch(1, np.zeros(k, np.int64), m, np.zeros(k), np.asarray(divs, dtype=float), np.zeros(1),
                       np.array([div_off]), alpha)
    return b.drop_below(eps).partition(0)


# -- clade statistics -------------------------------------------------------------

CLADE_STATS = ("i", "ii", "iii", "iv", "v", "vi", "vii", "a1", "a2", "a4")
_ALIASES = {"a.1(i)": "a1", "a.1": "a1", "a.2": "a2", "a.4": "a4"}


def biclade_sample(rng, alpha, n, floor):
    """Bi-clades of the Ito measure restricted to a crossing jump above ``floor``.

    The jump across the level is size-biased, zeta ~ zeta^(-1-a) on
    (floor, inf); the undershoot is uniform on (0, zeta); the central mass
    is the spindle value there.  Returns (m0, undershoot, zeta).
    """
    zeta = floor * (1.0 - rng.uniform(size=n)) ** (-1.0 / alpha)
    under = zeta * rng.uniform(size=n)
    m0 = rng.gamma(2 + alpha, size=n) * 2 * under * (zeta - under) / zeta
    return m0, under, zeta


def _walkers(rng, alpha, x0, levels, z_cutoff, top, blocks=None, **kw):
    levels = np.asarray(levels, dtype=float)
    return run_scaffold(rng, alpha, levels, z_cutoff, top, np.asarray(x0, dtype=float), blocks, **kw)


def _ratio_test(id, hits_lo, hits_hi, ref, alpha, params, n, seed):
    from .statlab import z_test
    p = hits_hi / max(hits_lo, 1)
    se = math.sqrt(ref * (1 - ref) / max(hits_lo, 1))
    rep = z_test(p, se, ref, id=id, alpha=alpha, params=params, n=n, seed=seed)
    rep.extra = {"hits_lo": int(hits_lo), "hits_hi": int(hits_hi)}
    return rep


def clade_statistics(stream, alpha, spec=None):
    """Monte Carlo checks of the clade laws.

    ``spec`` is a list of ids from CLADE_STATS, or a dict with keys
    ``stats``, ``n`` and optional parameters ``b``, ``y``, ``z``.
    """
    import time as _time

    from . import laws
    from .statlab import as_stream, ks_test, proportion_test, z_test

    if spec is None:
        spec = {}
    if not isinstance(spec, dict):
        spec = {"stats": list(spec)}
    ids = [_ALIASES.get(str(s).lower(), str(s).lower()) for s in spec.get("stats", CLADE_STATS)]
    bad = [s for s in ids if s not in CLADE_STATS]
    if bad:
        raise InvalidInput(f"unsupported clade statistics {bad}; choose from {CLADE_STATS}")
    if not 0 < alpha < 1:
        raise InvalidInput(f"alpha must lie in (0, 1), got {alpha}")
    n = int(spec.get("n", 10_000))
    b = float(spec.get("b", 1.0))
    y = float(spec.get("y", 0.5))
    z = float(spec.get("z", 1.0))
    stream = as_stream(stream)
    seed = stream.master_seed
    out = []
    for sid in ids:
        t0 = _time.perf_counter()
        rng = stream.child("clade", sid).generator()
        if sid == "iii":
            J, _ = euler_absorption(rng, -2 * alpha, np.full(n, b))
            rep = ks_test(J, laws.inverse_gamma_cdf(1 + alpha, b / 2), id="clade:iii", alpha=alpha,
                          params={"b": b}, seed=seed, reference="InverseGamma(1+a, b/2)")
        elif sid == "iv":
            blocks = PartitionBatch.single_blocks(np.full(n, b), alpha)
            zc = default_cutoff([z], alpha)
            o = _walkers(rng, alpha, np.zeros(n), [z], zc, _top(np.array([z]), zc), blocks)
            rep = proportion_test(int((o.peak < z).sum()), n, math.exp(-b / (2 * z)), id="clade:iv", alpha=alpha,
                                  params={"b": b, "z": z}, seed=seed, reference="exp(-b/2z)")
        elif sid == "v":
            # J+ = y given: the undershoot has density proportional to (u + y)^(-2-a)
            s = y * (1.0 - rng.uniform(size=n)) ** (-1.0 / (1 + alpha))
            u = s - y
            m0 = rng.gamma(2 + alpha, size=n) * 2 * u * y / s
            rep = ks_test(m0, laws.gamma_cdf(1.0, 1 / (2 * y)), id="clade:v", alpha=alpha, params={"y": y},
                          seed=seed, reference="Exponential(1/2y)")
        elif sid == "vi":
            zc = default_cutoff([z], alpha)
            o = _walkers(rng, alpha, np.full(n, y), [z], zc, _top(np.array([z]), zc))
            rep = proportion_test(int((o.peak < z).sum()), n, ((z - y) / z) ** alpha, id="clade:vi", alpha=alpha,
                                  params={"y": y, "z": z}, seed=seed, reference="((z-y)/z)^a")
        elif sid == "i":
            floor = b / 20
            m0, _, _ = biclade_sample(rng, alpha, n * 20, floor)
            rep = _ratio_test("clade:i", (m0 > b).sum(), (m0 > 2 * b).sum(), 2**-alpha, alpha, {"b": b}, n * 20,
                              seed)
        elif sid == "ii":
            # J+ under the Ito measure has density proportional to y^(-1-a)
            xf = 1e-2 * z
            jp = xf * (1.0 - rng.uniform(size=n)) ** (-1.0 / alpha)
            lv = np.array([z, 2 * z])
            o = _walkers(rng, alpha, np.minimum(jp, 2.5 * z), lv, 1e-4 * z, _top(lv, 1e-4 * z))
            rep = _ratio_test("clade:ii", (o.peak >= z).sum(), (o.peak >= 2 * z).sum(), 2**-alpha, alpha,
                              {"z": z, "floor": xf}, n, seed)
        elif sid == "vii":
            bf = 0.02 * z
            m0, _, _ = biclade_sample(rng, alpha, 4 * n, bf / 10)
            m0 = m0[m0 > bf]
            blocks = PartitionBatch.single_blocks(m0, alpha)
            zc = default_cutoff([z], alpha)
            o = _walkers(rng, alpha, np.zeros(len(m0)), [z], zc, _top(np.array([z]), zc), blocks)
            kept = m0[o.peak >= z]
            F = laws.clade_mass_given_lifetime_cdf(alpha, z)
            f0 = float(F(bf)[0])
            rep = ks_test(kept, lambda x: (F(x) - f0) / (1 - f0), id="clade:vii", alpha=alpha,
                          params={"z": z, "floor": bf}, seed=seed, reference="m0 | lifetime >= z")
        elif sid == "a1":
            # the length is the time for the scaffolding to fall by the crossing jump J
            t = 1.0
            xf = 1e-2 * t ** (1 / (1 + alpha))
            _, _, J = biclade_sample(rng, alpha, n, xf)
            J = np.minimum(J, 20.0)
            o = _walkers(rng, alpha, J, [], 1e-4, 50.0, track_time=True, time_cap=2.5 * t)
            rep = _ratio_test("clade:a1", (o.time > t).sum(), (o.time > 2 * t).sum(), 2 ** (-alpha / (1 + alpha)),
                              alpha, {"t": t, "floor": xf}, n, seed)
        elif sid == "a2":
            cap = 40.0
            o = _walkers(rng, alpha, np.ones(n), [], 1e-4, 50.0, track_time=True, time_cap=cap)
            e = np.exp(-np.minimum(o.time, cap))
            m, se = e.mean(), e.std(ddof=1) / math.sqrt(n)
            rep = z_test(-math.log(m), se / m, float(laws.hitting_laplace_exponent(alpha, 1.0)), id="clade:a2",
                         alpha=alpha, params={"theta": 1.0, "depth": 1.0}, n=n, seed=seed,
                         reference="(2^a Gamma(1+a))^(1/(1+a))")
        else:  # a4
            zz = spec.get("overshoot", 0.5 * y)
            zc = default_cutoff([y], alpha)
            o = _walkers(rng, alpha, np.full(n, zz), [y], zc, _top(np.array([y]), zc))
            sk = skewers(o, alpha, zc, 0.0)[0]
            alive = sk.block_counts() > 0
            c = sk.leftmost()[alive]
            ref = laws.tabulated_cdf(lambda v: laws.leftmost_reversal_density(alpha, y, zz, v), 1e-20, 200 * y,
                                     n=20000)
            rep = ks_test(c, ref, id="clade:a4", alpha=alpha, params={"y": y, "overshoot": zz}, seed=seed,
                          reference="leftmost mass given overshoot")
        rep.runtime = _time.perf_counter() - t0
        out.append(rep)
    return out
