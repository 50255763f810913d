"""Empirical measures on the real line.

Particle ensembles stand in for the laws mu_{X_s}, mu_{Y_s}.  With uniform
weights the p-Wasserstein distance between two empirical measures is the
L^p distance between their quantile functions, which is computed exactly
here (no LP solver in the runtime path).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySample, InvalidOrder, NonFiniteSample

__all__ = ["EmpiricalMeasure", "MeasureStats", "wasserstein"]


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniformly weighted atoms, kept sorted ascending."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise EmptySample("empirical measure needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteSample("empirical measure samples must be finite")
        arr = np.sort(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @classmethod
    def from_samples(cls, values) -> "EmpiricalMeasure":
        return cls(np.asarray(values, dtype=float))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    def moment(self, p: float) -> float:
        """Raw absolute moment mu(|.|^p); callers apply 1/p powers themselves."""
        if p <= 0:
            raise InvalidOrder(f"moment order must be positive, got {p}")
        return float(np.mean(np.abs(self.samples) ** p))


def wasserstein(p: float, mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Exact p-Wasserstein distance between two empirical measures.

    Equal sample counts reduce to the order-statistics coupling.  Unequal
    counts integrate |Q_mu - Q_nu|^p over the merged quantile breakpoints
    i/n and j/m, which is exact because both quantile functions are
    piecewise constant.  Breakpoints are merged on the integer lattice
    with denominator lcm(n, m) so no float comparison can misbin an atom.
    """
    if p < 1:
        raise InvalidOrder(f"Wasserstein order must be >= 1, got {p}")
    x, y = mu.samples, nu.samples
    n, m = x.size, y.size
    if n == m:
        return float(np.mean(np.abs(x - y) ** p) ** (1.0 / p))
    lcm = math.lcm(n, m)
    cuts = np.union1d(
        np.arange(1, n + 1, dtype=np.int64) * (lcm // n),
        np.arange(1, m + 1, dtype=np.int64) * (lcm // m),
    )
    widths = np.diff(np.concatenate(([0], cuts))) / lcm
    # quantile index on the segment ending at cut c is ceil(c * n / lcm) - 1
    ix = -(-cuts * n // lcm) - 1
    iy = -(-cuts * m // lcm) - 1
    gaps = np.abs(x[ix] - y[iy]) ** p
    return float((gaps @ widths) ** (1.0 / p))


class MeasureStats:
    """Lazy statistics of a particle column.

    The solver hot path hands coefficients this view instead of a full
    EmpiricalMeasure so that nothing is sorted or reduced unless a
    coefficient actually asks for it.  Read-only contract: callbacks must
    not mutate ``samples``.
    """

    __slots__ = ("samples", "_mean", "_moments", "_measure")

    def __init__(self, samples: np.ndarray):
        self.samples = samples
        self._mean = None
        self._moments = {}
        self._measure = None

    @property
    def mean(self) -> float:
        if self._mean is None:
            self._mean = float(self.samples.mean())
        return self._mean

    def abs_moment(self, p: float = 1.0) -> float:
        got = self._moments.get(p)
        if got is None:
            got = float(np.mean(np.abs(self.samples) ** p))
            self._moments[p] = got
        return got

    @property
    def measure(self) -> EmpiricalMeasure:
        if self._measure is None:
            self._measure = EmpiricalMeasure.from_samples(self.samples)
        return self._measure
