"""Splittable, counter-based random streams and elementary samplers.

A :class:`RandomStream` is a value: the pair ``(master_seed, path)``.  Every
call to :meth:`RandomStream.generator` builds a fresh Philox generator keyed
on that pair, so equal streams always reproduce equal draws and sibling
streams (different paths) are independent.  Callers that need several
independent draws derive children with :meth:`RandomStream.child`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1


class InvalidInput(ValueError):
    """Raised when a sampler or operation receives out-of-range parameters."""


def hash_key(key) -> int:
    """Map an int or an ASCII string to a 64-bit path component."""
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise InvalidInput(f"stream keys must be nonnegative, got {key}")
        return int(key) & MASK64
    if isinstance(key, str):
        digest = hashlib.blake2b(key.encode("ascii"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise InvalidInput(f"unsupported stream key {key!r}")


def parse_seed(text) -> int:
    """Parse a 64-bit unsigned seed given in decimal or 0x-hex."""
    if isinstance(text, (int, np.integer)):
        value = int(text)
    else:
        s = str(text).strip().lower()
        value = int(s, 16) if s.startswith("0x") else int(s, 10)
    if not 0 <= value <= MASK64:
        raise InvalidInput(f"seed must fit in 64 unsigned bits, got {text}")
    return value


@dataclass(frozen=True)
class RandomStream:
    master_seed: int
    path: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "master_seed", parse_seed(self.master_seed))
        object.__setattr__(self, "path", tuple(hash_key(k) for k in self.path))

    def child(self, *keys) -> "RandomStream":
        return RandomStream(self.master_seed, self.path + tuple(hash_key(k) for k in keys))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))


def _positive(**params):
    for name, value in params.items():
        if not np.all(np.asarray(value, dtype=float) > 0):
            raise InvalidInput(f"{name} must be positive, got {value}")


def _rng(stream):
    if isinstance(stream, RandomStream):
        return stream.generator()
    if isinstance(stream, np.random.Generator):
        return stream
    raise InvalidInput("expected a RandomStream or numpy Generator")


def sample_gamma(stream, shape, rate, size=None):
    """Gamma(shape, rate) draws, density proportional to x^(shape-1) e^(-rate x)."""
    _positive(shape=shape, rate=rate)
    return _rng(stream).gamma(shape, 1.0 / np.asarray(rate, dtype=float), size=size)


def sample_inverse_gamma(stream, shape, scale, size=None):
    """Draws X with scale / X ~ Gamma(shape, 1)."""
    _positive(shape=shape, scale=scale)
    return np.asarray(scale, dtype=float) / _rng(stream).gamma(shape, 1.0, size=size)


def sample_beta(stream, a, b, size=None):
    _positive(a=a, b=b)
    return _rng(stream).beta(a, b, size=size)


def sample_exponential(stream, rate, size=None):
    _positive(rate=rate)
    return _rng(stream).exponential(1.0 / np.asarray(rate, dtype=float), size=size)


def sample_poisson_process(stream, rate, horizon):
    """Sorted event times of a homogeneous Poisson process on [0, horizon]."""
    _positive(rate=rate, horizon=horizon)
    rng = _rng(stream)
    n = rng.poisson(rate * horizon)
    return np.sort(rng.uniform(0.0, horizon, size=n))
