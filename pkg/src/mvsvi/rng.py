"""Counter-based Gaussian noise streams.

Every Brownian increment is a pure function of (seed, step, particle):
a Philox stream keyed by (seed, step) yields one 53-bit uniform word per
particle, mapped through the inverse normal CDF.  Because consumption is
exactly one word per particle, any contiguous particle block can be
reproduced by seeking the counter, so results do not depend on scheduling
or on how particles are partitioned across workers.

Stream tags: step k uses (seed, 0, k); the initial-state sampler uses
(seed, 1).
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.special import ndtri

__all__ = ["normal_row", "uniform_row", "init_generator"]

_HALF_SCALE = 2.0 ** -53


def _step_generator(seed: int, step: int) -> Generator:
    return Generator(Philox(SeedSequence((int(seed), 0, int(step)))))


def uniform_row(seed: int, step: int, n: int, offset: int = 0) -> np.ndarray:
    """Uniforms in (0, 1) for particles offset..offset+n-1 of one step."""
    gen = _step_generator(seed, step)
    if offset:
        gen.bit_generator.advance(offset // 4)
        skip = offset % 4
        if skip:
            gen.integers(0, 1 << 53, size=skip, dtype=np.uint64)
    words = gen.integers(0, 1 << 53, size=n, dtype=np.uint64)
    return (words.astype(np.float64) + 0.5) * _HALF_SCALE


def normal_row(seed: int, step: int, n: int, offset: int = 0) -> np.ndarray:
    """Standard normals for particles offset..offset+n-1 of one step."""
    return ndtri(uniform_row(seed, step, n, offset))


def init_generator(seed: int) -> Generator:
    """Stream reserved for sampling the initial law."""
    return Generator(Philox(SeedSequence((int(seed), 1))))
