"""Deterministic random-number plumbing.

Every stochastic routine in this package draws from a Philox
counter-based bit generator keyed through ``numpy.random.SeedSequence``
by a 64-bit base seed plus optional integer task coordinates, and all
Gaussian variates come from the Box-Muller transform applied to pairs
of uniforms.  Consequences:

* replays with the same seed are bit-exact within this implementation
  (across numpy versions or languages nothing is promised);
* parallel work derives independent streams from
  ``(base seed, task coordinates)`` without any shared state.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_seed_sequence", "make_rng", "normals", "float_key"]

_MASK64 = (1 << 64) - 1


def float_key(value: float) -> int:
    """Integer key for a float, usable as a seed coordinate.

    The IEEE-754 bit pattern, so distinct parameter values give distinct
    streams while equal values give identical ones.
    """
    return int(np.float64(value).view(np.uint64))


def derive_seed_sequence(seed: int, *coords: int) -> np.random.SeedSequence:
    """SeedSequence for ``seed`` refined by integer task coordinates."""
    return np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(int(c) & _MASK64 for c in coords))


def make_rng(seed: int, *coords: int) -> np.random.Generator:
    """Philox generator keyed by ``(seed, coords)``."""
    return np.random.Generator(np.random.Philox(derive_seed_sequence(seed, *coords)))


def normals(rng: np.random.Generator, shape, scale: float = 1.0) -> np.ndarray:
    """Gaussian draws via Box-Muller from pairs of uniforms.

    ``u1`` is mapped into (0, 1] so the logarithm is always finite.
    Returns a float64 array of the requested shape with standard
    deviation ``scale`` (exactly zero when ``scale`` is 0).
    """
    shape = tuple(np.atleast_1d(shape).astype(int)) if not np.isscalar(shape) else (int(shape),)
    n = int(np.prod(shape)) if shape else 1
    if scale == 0.0 or n == 0:
        return np.zeros(shape)
    pairs = (n + 1) // 2
    u1 = 1.0 - rng.random(pairs)
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:n]
    return (scale * z).reshape(shape)
