"""Flat array storage for many interval partitions at once.

Block ``j`` belongs to partition ``owner[j]``; blocks of one partition are
contiguous and in left-to-right order.  ``gap[j]`` is the truncated (dust)
mass immediately before block ``j``, ``tail[i]`` the dust after the last
block of partition ``i``.  ``div[j]`` is the diversity to the left of
block ``j`` and ``div_end[i]`` the total diversity.
"""

from __future__ import annotations

import numpy as np

from .partition import IntervalPartition, from_masses


class PartitionBatch:
    def __init__(self, n, owner, mass, gap, div, tail, div_end, alpha):
        self.n = int(n)
        self.owner = np.asarray(owner, dtype=np.int64)
        self.mass = np.asarray(mass, dtype=float)
        self.gap = np.asarray(gap, dtype=float)
        self.div = np.asarray(div, dtype=float)
        self.tail = np.asarray(tail, dtype=float)
        self.div_end = np.asarray(div_end, dtype=float)
        self.alpha = alpha

    @classmethod
    def empty(cls, n, alpha):
        z = np.zeros(0)
        return cls(n, np.zeros(0, dtype=np.int64), z, z, z, np.zeros(n), np.zeros(n), alpha)

    @classmethod
    def single_blocks(cls, masses, alpha):
        m = np.asarray(masses, dtype=float)
        n = len(m)
        return cls(n, np.arange(n), m, np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n), alpha)

    @classmethod
    def from_partitions(cls, parts, alpha=None):
        parts = list(parts)
        alpha = alpha if alpha is not None else next((p.alpha for p in parts if p.alpha is not None), None)
        owner, mass, gap, div, tail, div_end = [], [], [], [], [], []
        for i, p in enumerate(parts):
            g = p.gaps()
            owner.append(np.full(p.n_blocks, i))
            mass.append(p.lengths)
            gap.append(g[:-1])
            div.append(p.diversity_or_zero())
            tail.append(g[-1])
            div_end.append(p.terminal_diversity())
        cat = (lambda xs: np.concatenate(xs) if xs else np.zeros(0))
        return cls(len(parts), cat(owner), cat(mass), cat(gap), cat(div), np.array(tail), np.array(div_end), alpha)

    @classmethod
    def repeat(cls, part, n):
        return cls.from_partitions([part] * n)

    def copy(self):
        return PartitionBatch(self.n, self.owner.copy(), self.mass.copy(), self.gap.copy(), self.div.copy(),
                              self.tail.copy(), self.div_end.copy(), self.alpha)

    # -- summaries --------------------------------------------------------

    def starts(self):
        return np.searchsorted(self.owner, np.arange(self.n + 1))

    def block_counts(self):
        return np.bincount(self.owner, minlength=self.n)

    def total_mass(self):
        return np.bincount(self.owner, self.mass + self.gap, minlength=self.n) + self.tail

    def truncation_mass(self):
        return np.bincount(self.owner, self.gap, minlength=self.n) + self.tail

    def leftmost(self):
        out = np.zeros(self.n)
        st = self.starts()
        has = st[1:] > st[:-1]
        out[has] = self.mass[st[:-1][has]]
        return out

    def largest(self):
        out = np.zeros(self.n)
        if len(self.mass):
            np.maximum.at(out, self.owner, self.mass)
        return out

    def ranked(self, k):
        """k-th largest block mass of each partition (k = 1 is the largest)."""
        out = np.zeros(self.n)
        if not len(self.mass):
            return out
        order = np.lexsort((-self.mass, self.owner))
        st = self.starts()
        idx = st[:-1] + (k - 1)
        ok = idx < st[1:]
        out[ok] = self.mass[order[idx[ok]]]
        return out

    def count_above(self, h):
        return np.bincount(self.owner[self.mass > h], minlength=self.n)

    def is_empty(self):
        return self.total_mass() <= 0

    # -- transformations --------------------------------------------------

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        st = self.starts()
        counts = st[idx + 1] - st[idx]
        sel = np.repeat(st[idx], counts) + (np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts))
        return PartitionBatch(len(idx), np.repeat(np.arange(len(idx)), counts), self.mass[sel], self.gap[sel],
                              self.div[sel], self.tail[idx], self.div_end[idx], self.alpha)

    def scaled(self, c):
        """Scale partition i by c[i]: masses by c, diversity by c**alpha."""
        c = np.broadcast_to(np.asarray(c, dtype=float), (self.n,))
        cb = c[self.owner]
        fa = c**self.alpha
        return PartitionBatch(self.n, self.owner, self.mass * cb, self.gap * cb, self.div * fa[self.owner],
                              self.tail * c, self.div_end * fa, self.alpha)

    def normalized(self):
        m = self.total_mass()
        c = np.where(m > 0, 1.0 / np.where(m > 0, m, 1.0), 1.0)
        return self.scaled(c)

    def drop_below(self, eps, keep_first=False):
        """Move blocks of mass < eps into the dust, optionally sparing each leftmost block."""
        keep = self.mass >= eps
        if keep_first and len(self.mass):
            keep[self.starts()[:-1][self.block_counts() > 0]] = True
        return self.drop_mask(keep)

    def drop_mask(self, keep):
        """Keep only the flagged blocks; the others become dust."""
        if np.all(keep):
            return self
        carry = self.gap + np.where(keep, 0.0, self.mass)
        kept_before = np.cumsum(keep) - keep
        gid = kept_before + self.owner
        sums = np.bincount(gid, carry, minlength=int(np.sum(keep)) + self.n + 1)
        kidx = np.flatnonzero(keep)
        kept_total = np.bincount(self.owner[kidx], minlength=self.n)
        tail_gid = np.cumsum(kept_total) + np.arange(self.n)
        tail = self.tail + sums[tail_gid]
        return PartitionBatch(self.n, self.owner[kidx], self.mass[kidx], sums[gid[kidx]], self.div[kidx], tail,
                              self.div_end, self.alpha)

    def partition(self, i) -> IntervalPartition:
        st = self.starts()
        a, b = st[i], st[i + 1]
        gaps = np.concatenate([self.gap[a:b], [self.tail[i]]])
        return from_masses(self.mass[a:b], gaps, self.div[a:b], self.div_end[i], self.alpha)

    def partitions(self):
        return [self.partition(i) for i in range(self.n)]


def stack_batches(batches):
    """Disjoint union: the partitions of batches[0], then batches[1], ..."""
    batches = list(batches)
    offs = np.cumsum([0] + [b.n for b in batches])
    cat = np.concatenate
    return PartitionBatch(int(offs[-1]), cat([b.owner + o for b, o in zip(batches, offs)]),
                          cat([b.mass for b in batches]), cat([b.gap for b in batches]),
                          cat([b.div for b in batches]), cat([b.tail for b in batches]),
                          cat([b.div_end for b in batches]), batches[0].alpha)


def concat_batches(batches):
    """Partition-wise concatenation: result i is batches[0][i] * batches[1][i] * ..."""
    batches = list(batches)
    n = batches[0].n
    alpha = batches[0].alpha
    owners, masses, gaps, divs, ranks = [], [], [], [], []
    carry = np.zeros(n)
    div_off = np.zeros(n)
    for k, b in enumerate(batches):
        g = b.gap.copy()
        st = b.starts()
        has = st[1:] > st[:-1]
        first = st[:-1][has]
        g[first] += carry[has]
        carry = np.where(has, b.tail, carry + b.tail)
        owners.append(b.owner)
        masses.append(b.mass)
        gaps.append(g)
        divs.append(b.div + div_off[b.owner])
        ranks.append(np.full(len(b.mass), k))
        div_off = div_off + b.div_end
    owner = np.concatenate(owners)
    order = np.lexsort((np.concatenate(ranks), owner))
    return PartitionBatch(n, owner[order], np.concatenate(masses)[order], np.concatenate(gaps)[order],
                          np.concatenate(divs)[order], carry, div_off, alpha)


def merge_sources(src, group, n):
    """Concatenate consecutive partitions of ``src`` sharing a group label.

    ``group[k]`` is the output partition of source partition k; labels must
    be nondecreasing.  Groups without sources come out empty.
    """
    group = np.asarray(group, dtype=np.int64)
    gstart = np.searchsorted(group, np.arange(n))
    cum = np.cumsum(src.div_end) - src.div_end
    base = np.concatenate([cum, [0.0]])[gstart] if len(group) else np.zeros(n)
    off = cum - base[group] if len(group) else cum
    m = src.n
    # blocks and one zero-mass tail marker per source, in source order
    item_src = np.concatenate([src.owner, np.arange(m)])
    item_rank = np.concatenate([np.arange(len(src.mass)), np.full(m, len(src.mass))])
    order = np.lexsort((item_rank, item_src))
    is_block = np.concatenate([np.ones(len(src.mass), bool), np.zeros(m, bool)])[order]
    mass = np.concatenate([src.mass, np.zeros(m)])[order]
    gap = np.concatenate([src.gap, src.tail])[order]
    div = np.concatenate([src.div + off[src.owner], np.zeros(m)])[order]
    owner = group[item_src[order]]
    div_end = np.bincount(group, src.div_end, minlength=n)
    merged = PartitionBatch(n, owner, mass, gap, div, np.zeros(n), div_end, src.alpha)
    return merged.drop_mask(is_block)
