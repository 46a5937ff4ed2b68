"""Level-indexed sequences of interval partitions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .batch import PartitionBatch

TRACE_COLUMNS = ("replicate", "level", "total_mass", "block_count", "leftmost_mass", "largest_mass",
                 "diversity_total")


@dataclass
class EvolutionTrace:
    """One replicate: a partition per level."""

    alpha: float
    levels: np.ndarray
    states: list
    method: str = "kernel"
    type: int = 1
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        if len(self.states) != len(self.levels):
            raise ValueError("one state per level required")

    @property
    def total_mass(self):
        return np.array([s.total_mass for s in self.states])

    def check(self):
        assert np.all(np.diff(self.levels) > 0)
        for s in self.states:
            s.validate()
        if self.type == 1:
            dead = np.flatnonzero(self.total_mass == 0)
            if len(dead):
                assert np.all(self.total_mass[dead[0]:] == 0)


@dataclass
class BatchTrace:
    """Many replicates on a common level grid, one PartitionBatch per level."""

    alpha: float
    levels: np.ndarray
    batches: list
    method: str = "kernel"
    type: int = 1

    @property
    def n(self):
        return self.batches[0].n

    def trace(self, i) -> EvolutionTrace:
        return EvolutionTrace(self.alpha, self.levels, [b.partition(i) for b in self.batches], self.method,
                              self.type)

    def traces(self):
        return [self.trace(i) for i in range(self.n)]

    def summary(self, k):
        return summarize(self.batches[k])

    def rows(self, replicate_offset=0):
        """Trace CSV rows, replicate-major."""
        cols = [summarize(b) for b in self.batches]
        out = []
        for i in range(self.n):
            for k, y in enumerate(self.levels):
                c = cols[k]
                out.append((i + replicate_offset, float(y), float(c["total_mass"][i]), int(c["block_count"][i]),
                            float(c["leftmost_mass"][i]), float(c["largest_mass"][i]),
                            float(c["diversity_total"][i])))
        return out


def summarize(b: PartitionBatch):
    return {
        "total_mass": b.total_mass(),
        "block_count": b.block_counts(),
        "leftmost_mass": b.leftmost(),
        "largest_mass": b.largest(),
        "diversity_total": b.div_end,
    }
