"""Interval partitions: algebra, diversity and the metric d_I.

An interval partition of [0, M] is stored as an ``(n, 2)`` array of block
endpoints.  Mass lost to truncation (blocks below a sampler's resolution)
shows up as gaps between consecutive blocks and after the last block, and
its total is recorded in ``truncation_mass``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from .randkit import InvalidInput

N_MAX = 30


def _frozen(a, shape=None):
    arr = np.array(a, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class IntervalPartition:
    """Finite interval partition with optional exact diversity metadata.

    ``diversity[i]`` is the diversity of the part of the partition to the
    left of block ``i``; ``diversity_end`` is the total diversity.
    """

    blocks: np.ndarray
    total_mass: float
    truncation_mass: float = 0.0
    diversity: np.ndarray | None = None
    diversity_end: float | None = None
    alpha: float | None = None
    flags: tuple = field(default=())

    def __post_init__(self):
        blocks = _frozen(self.blocks if len(self.blocks) else np.empty((0, 2)), (-1, 2))
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "total_mass", float(self.total_mass))
        object.__setattr__(self, "truncation_mass", float(self.truncation_mass))
        if self.diversity is not None:
            div = _frozen(self.diversity)
            if len(div) != len(blocks):
                raise InvalidInput("diversity must have one entry per block")
            object.__setattr__(self, "diversity", div)
            if self.diversity_end is None:
                end = float(div[-1]) if len(div) else 0.0
                object.__setattr__(self, "diversity_end", end)
        if self.diversity_end is not None:
            object.__setattr__(self, "diversity_end", float(self.diversity_end))
        self.validate()

    def validate(self):
        tol = 1e-12 * max(self.total_mass, 1.0)
        b = self.blocks
        if self.total_mass < 0 or self.truncation_mass < -tol:
            raise InvalidInput("masses must be nonnegative")
        if len(b):
            if np.any(b[:, 0] < -tol) or np.any(b[:, 1] < b[:, 0]):
                raise InvalidInput("blocks must satisfy 0 <= left <= right")
            if np.any(b[1:, 0] < b[:-1, 1] - tol):
                raise InvalidInput("blocks overlap or are out of order")
            if b[-1, 1] > self.total_mass + tol:
                raise InvalidInput("last block exceeds total mass")
        if self.lengths.sum() + self.truncation_mass > self.total_mass + tol * (1 + len(b)):
            raise InvalidInput("block mass plus truncation exceeds total mass")
        if self.diversity is not None and len(self.diversity):
            d = self.diversity
            if np.any(d < -tol) or np.any(np.diff(d) < -1e-12 * max(1.0, d[-1])):
                raise InvalidInput("diversity must be nonnegative and nondecreasing")

    @property
    def lengths(self) -> np.ndarray:
        return self.blocks[:, 1] - self.blocks[:, 0]

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def is_empty(self) -> bool:
        return self.total_mass == 0 and self.n_blocks == 0

    def gaps(self) -> np.ndarray:
        """Truncated mass before each block, then after the last block."""
        if not self.n_blocks:
            return np.array([self.total_mass])
        left = self.blocks[:, 0] - np.concatenate([[0.0], self.blocks[:-1, 1]])
        return np.concatenate([np.maximum(left, 0.0), [max(self.total_mass - self.blocks[-1, 1], 0.0)]])

    def diversity_or_zero(self) -> np.ndarray:
        return np.zeros(self.n_blocks) if self.diversity is None else np.asarray(self.diversity)

    def terminal_diversity(self) -> float:
        return 0.0 if self.diversity_end is None else self.diversity_end

    def leftmost_mass(self) -> float:
        return float(self.lengths[0]) if self.n_blocks else 0.0

    def largest_mass(self) -> float:
        return float(self.lengths.max()) if self.n_blocks else 0.0

    def sorted_masses(self) -> np.ndarray:
        return np.sort(self.lengths)[::-1]

    def count_above(self, h) -> int:
        return int(np.count_nonzero(self.lengths > h))

    def replace(self, **changes) -> "IntervalPartition":
        fields = dict(
            blocks=self.blocks,
            total_mass=self.total_mass,
            truncation_mass=self.truncation_mass,
            diversity=self.diversity,
            diversity_end=self.diversity_end,
            alpha=self.alpha,
            flags=self.flags,
        )
        fields.update(changes)
        return IntervalPartition(**fields)

    def __eq__(self, other):
        if not isinstance(other, IntervalPartition):
            return NotImplemented
        same_div = (self.diversity is None) == (other.diversity is None)
        if same_div and self.diversity is not None:
            same_div = np.array_equal(self.diversity, other.diversity)
        return (
            np.array_equal(self.blocks, other.blocks)
            and self.total_mass == other.total_mass
            and self.truncation_mass == other.truncation_mass
            and same_div
        )

    def allclose(self, other, rtol=1e-12) -> bool:
        if self.n_blocks != other.n_blocks:
            return False
        scale_ = max(self.total_mass, other.total_mass, 1e-300)
        return bool(
            np.allclose(self.blocks, other.blocks, rtol=rtol, atol=rtol * scale_)
            and math.isclose(self.total_mass, other.total_mass, rel_tol=rtol, abs_tol=rtol * scale_)
        )

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "alpha": self.alpha,
            "total_mass": self.total_mass,
            "truncation_mass": self.truncation_mass,
            "blocks": self.blocks.tolist(),
            "diversity": None if self.diversity is None else self.diversity.tolist(),
        }
        if self.diversity_end is not None:
            out["diversity_end"] = self.diversity_end
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "IntervalPartition":
        try:
            return cls(
                blocks=np.asarray(d["blocks"], dtype=float).reshape(-1, 2),
                total_mass=d["total_mass"],
                truncation_mass=d.get("truncation_mass", 0.0),
                diversity=d.get("diversity"),
                diversity_end=d.get("diversity_end"),
                alpha=d.get("alpha"),
            )
        except KeyError as exc:
            raise InvalidInput(f"partition JSON missing field {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "IntervalPartition":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "left", "right", "length", "diversity"])
        div = self.diversity
        for i, (a, b) in enumerate(self.blocks):
            w.writerow([i, repr(a), repr(b), repr(b - a), "" if div is None else repr(div[i])])
        return buf.getvalue()


def empty(alpha=None) -> IntervalPartition:
    """The empty partition; it carries zero diversity."""
    return IntervalPartition(np.empty((0, 2)), 0.0, 0.0, np.empty(0), 0.0, alpha)


def from_masses(masses, gaps=None, diversity=None, diversity_end=None, alpha=None) -> IntervalPartition:
    """Build a partition from block masses in order.

    ``gaps`` has one more entry than ``masses``: truncated mass before each
    block and after the last one.
    """
    m = np.asarray(masses, dtype=float)
    g = np.zeros(len(m) + 1) if gaps is None else np.asarray(gaps, dtype=float)
    if len(g) != len(m) + 1:
        raise InvalidInput("gaps must have len(masses) + 1 entries")
    steps = np.empty(2 * len(m) + 1)
    steps[0::2] = g
    steps[1::2] = m
    edges = np.cumsum(steps)
    blocks = np.column_stack([edges[0:-1:2], edges[1::2]]) if len(m) else np.empty((0, 2))
    total = float(edges[-1]) if len(edges) else 0.0
    return IntervalPartition(blocks, total, float(g.sum()), diversity, diversity_end, alpha)


def concatenate(parts) -> IntervalPartition:
    """Concatenate partitions left to right, shifting by preceding masses.

    Diversity is kept, offset by the preceding terminal diversities, when
    every part carries it; otherwise it is dropped.
    """
    parts = list(parts)
    alpha = next((p.alpha for p in parts if p.alpha is not None), None)
    if not parts:
        return empty(alpha)
    keep_div = all(p.diversity is not None for p in parts)
    blocks, divs = [], []
    offset, div_offset, trunc = 0.0, 0.0, 0.0
    for p in parts:
        if p.n_blocks:
            blocks.append(p.blocks + offset)
            if keep_div:
                divs.append(p.diversity + div_offset)
        offset += p.total_mass
        trunc += p.truncation_mass
        if keep_div:
            div_offset += p.terminal_diversity()
    b = np.concatenate(blocks) if blocks else np.empty((0, 2))
    if keep_div:
        d = np.concatenate(divs) if divs else np.empty(0)
        return IntervalPartition(b, offset, trunc, d, div_offset, alpha)
    return IntervalPartition(b, offset, trunc, None, None, alpha)


def scale(c, beta: IntervalPartition, alpha=None) -> IntervalPartition:
    """Multiply all masses by c; diversity scales by c**alpha."""
    if not c > 0:
        raise InvalidInput(f"scale factor must be positive, got {c}")
    a = beta.alpha if alpha is None else alpha
    div, div_end = beta.diversity, beta.diversity_end
    if div is not None or div_end is not None:
        if a is None:
            raise InvalidInput("scaling diversity requires alpha")
        f = c**a
        div = None if div is None else div * f
        div_end = None if div_end is None else div_end * f
    return IntervalPartition(
        beta.blocks * c, beta.total_mass * c, beta.truncation_mass * c, div, div_end, a, beta.flags
    )


def reverse(beta: IntervalPartition) -> IntervalPartition:
    """Left-right reversal; diversity metadata is dropped."""
    m = beta.total_mass
    b = beta.blocks[::-1]
    blocks = np.column_stack([m - b[:, 1], m - b[:, 0]]) if len(b) else np.empty((0, 2))
    return IntervalPartition(blocks, m, beta.truncation_mass, None, None, beta.alpha)


def estimate_diversity(beta: IntervalPartition, t, h_grid, alpha=None) -> np.ndarray:
    """Gamma(1-alpha) h^alpha #{blocks longer than h ending by t}, per h."""
    h = np.asarray(h_grid, dtype=float)
    if h.size == 0:
        raise InvalidInput("h_grid must be nonempty")
    if np.any(h <= 0) or np.any(np.diff(h) >= 0):
        raise InvalidInput("h_grid must be positive and strictly decreasing")
    a = beta.alpha if alpha is None else alpha
    if a is None:
        raise InvalidInput("alpha is required")
    lengths = beta.lengths[beta.blocks[:, 1] <= t] if beta.n_blocks else np.empty(0)
    srt = np.sort(lengths)
    counts = len(srt) - np.searchsorted(srt, h, side="right")
    return gamma_fn(1 - a) * h**a * counts


# -- metric d_I ------------------------------------------------------------


@dataclass(frozen=True)
class Correspondence:
    pairs: tuple

    def __post_init__(self):
        pairs = tuple((int(i), int(j)) for i, j in self.pairs)
        for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
            if not (i1 > i0 and j1 > j0):
                raise InvalidInput("correspondence indices must increase in both coordinates")
        object.__setattr__(self, "pairs", pairs)


def _metric_inputs(beta, gamma, missing):
    for p in (beta, gamma):
        if p.diversity is None and missing == "error":
            raise InvalidInput("partition lacks diversity metadata")
    return (
        beta.lengths,
        gamma.lengths,
        beta.diversity_or_zero(),
        gamma.diversity_or_zero(),
        abs(beta.terminal_diversity() - gamma.terminal_diversity()),
    )


def _pair_terms(a, b):
    """(|a-b| - a, |a-b| - b), exact when one of them reduces to -min(a, b)."""
    if a >= b:
        return -b, (a - b) - b
    return (b - a) - a, -a


def distortion(beta, gamma, corr, missing="zero") -> float:
    """Distortion of a correspondence: the max of the four defining terms.

    The mass terms are accumulated pair by pair as ||beta|| + sum(|u-v| - u)
    and ||gamma|| + sum(|u-v| - v), so equal matchings give equal floats.
    """
    u, v, du, dv, dinf = _metric_inputs(beta, gamma, missing)
    pairs = corr.pairs if isinstance(corr, Correspondence) else tuple(corr)
    sup_div, sa, sb = 0.0, 0.0, 0.0
    for i, j in pairs:
        sup_div = max(sup_div, abs(du[i] - dv[j]))
        da, db = _pair_terms(u[i], v[j])
        sa += da
        sb += db
    return max(sup_div, dinf, beta.total_mass + sa, gamma.total_mass + sb)


def all_correspondences(n, m):
    for k in range(min(n, m) + 1):
        for left in itertools.combinations(range(n), k):
            for right in itertools.combinations(range(m), k):
                yield tuple(zip(left, right))


def brute_force_distance(beta, gamma, missing="zero") -> float:
    """Minimum distortion by exhaustive enumeration of correspondences."""
    return min(distortion(beta, gamma, c, missing) for c in all_correspondences(beta.n_blocks, gamma.n_blocks))


def _pareto(points):
    points.sort(key=lambda p: (p[0], p[1]))
    out, best_b = [], math.inf
    for p in points:
        if p[1] < best_b:
            out.append(p)
            best_b = p[1]
    return out


def _frontier(u, v, admissible):
    """Pareto frontier of (sum(|u-v|-u), sum(|u-v|-v)) over increasing matchings.

    Points carry a linked list of their pairs for reconstruction.
    """
    n, m = len(u), len(v)
    prev_row = [[(0.0, 0.0, None)] for _ in range(m + 1)]
    for i in range(1, n + 1):
        row = [[(0.0, 0.0, None)]]
        for j in range(1, m + 1):
            cand = prev_row[j] + row[j - 1]
            if admissible[i - 1, j - 1]:
                da, db = _pair_terms(u[i - 1], v[j - 1])
                cand = cand + [(a + da, b + db, ((i - 1, j - 1), link)) for a, b, link in prev_row[j - 1]]
            row.append(_pareto(cand))
        prev_row = row
    return prev_row[m]


def _unlink(link):
    pairs = []
    while link is not None:
        pairs.append(link[0])
        link = link[1]
    return tuple(reversed(pairs))


def metric_distance(beta, gamma, n_max=N_MAX, missing="zero") -> float:
    """The metric d_I: infimum of the distortion over all correspondences.

    Exact for finite partitions.  A bisection over the candidate values of
    the bottleneck diversity term is combined with a Pareto dynamic
    program over the two additive mass terms.  Partitions without
    diversity metadata are treated as having zero diversity unless
    ``missing="error"``.
    """
    if beta.n_blocks > n_max or gamma.n_blocks > n_max:
        raise InvalidInput(f"more than n_max={n_max} blocks: truncate first")
    u, v, du, dv, dinf = _metric_inputs(beta, gamma, missing)
    u, v = u.tolist(), v.tolist()
    mb, mg = beta.total_mass, gamma.total_mass
    diff = np.abs(du[:, None] - dv[None, :])
    taus = np.unique(np.concatenate([[0.0], diff.ravel()]))

    cache = {}

    def solve(k):
        if k not in cache:
            front = _frontier(u, v, diff <= taus[k])
            h = min(max(mb + a, mg + b) for a, b, _ in front)
            cache[k] = (h, front)
        return cache[k]

    lo, hi = 0, len(taus) - 1
    if taus[hi] < solve(hi)[0]:
        lo = hi
    else:
        while lo < hi:
            mid = (lo + hi) // 2
            if taus[mid] >= solve(mid)[0]:
                hi = mid
            else:
                lo = mid + 1
    best = math.inf
    for k in {lo, max(lo - 1, 0)}:
        for _, _, link in solve(k)[1]:
            best = min(best, distortion(beta, gamma, _unlink(link), missing))
    return best
