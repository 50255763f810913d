"""Proper lower-semicontinuous convex penalties on the real line.

A potential psi has psi(0) = 0, psi >= 0, and an effective-domain closure
[d_lo, d_hi] containing 0.  The module provides the smooth approximation
at level n > 0,

    env_n(x)  = min_y { (n/2)(y - x)^2 + psi(y) },
    prox_n(x) = the unique minimizer,
    grad_n(x) = n*(x - prox_n(x)),

together with subdifferentials and domain projection.  Everything is pure
and vectorised over numpy arrays; levels are positive reals so sweeps can
use geometric grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import ConstructionError, NumericNonconvergence

__all__ = ["ConvexPotential", "YosidaView"]

_GOLD = (math.sqrt(5.0) - 1.0) / 2.0
_PROX_BUDGET = 200
_PROX_TOL = 1e-12


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _ret(arr, scalar):
    return float(arr) if scalar else arr


@dataclass(frozen=True)
class ConvexPotential:
    kind: str
    lo: float = -math.inf
    hi: float = math.inf
    # abs_power
    power: float = 2.0
    scale: float = 0.0
    # max_affine: tuple of (slope, intercept)
    pieces: Tuple[Tuple[float, float], ...] = ()
    # custom
    fn: Optional[Callable] = None
    prox_fn: Optional[Callable] = None

    # -- constructors -------------------------------------------------

    @classmethod
    def indicator_interval(cls, lo: float, hi: float) -> "ConvexPotential":
        # 0 may sit on the boundary: the reflected-at-zero scenarios need
        # [0, hi] even though the well-posedness assumption keeps 0 interior.
        if not (lo <= 0.0 <= hi) or not (lo < hi):
            raise ConstructionError(
                f"indicator interval must contain 0, got [{lo}, {hi}]"
            )
        return cls(kind="indicator", lo=float(lo), hi=float(hi))

    @classmethod
    def abs_power(cls, p: float, scale: float) -> "ConvexPotential":
        if p < 1.0:
            raise ConstructionError(f"abs_power exponent must be >= 1, got {p}")
        if scale < 0.0:
            raise ConstructionError(f"abs_power scale must be >= 0, got {scale}")
        return cls(kind="abs_power", power=float(p), scale=float(scale))

    @classmethod
    def max_affine(cls, pieces: Sequence[Tuple[float, float]]) -> "ConvexPotential":
        ps = tuple((float(a), float(b)) for a, b in pieces)
        if not ps:
            raise ConstructionError("max_affine needs at least one piece")
        if max(b for _, b in ps) != 0.0:
            raise ConstructionError("max_affine must have psi(0) = max intercept = 0")
        active0 = [a for a, b in ps if b == 0.0]
        if min(active0) > 0.0 or max(active0) < 0.0:
            raise ConstructionError("max_affine must be minimised at 0 (psi >= 0)")
        return cls(kind="max_affine", pieces=ps)

    @classmethod
    def custom(
        cls,
        fn: Callable,
        prox: Optional[Callable] = None,
        domain: Tuple[float, float] = (-math.inf, math.inf),
    ) -> "ConvexPotential":
        lo, hi = float(domain[0]), float(domain[1])
        if not (lo <= 0.0 <= hi) or not (lo < hi):
            raise ConstructionError("custom domain must contain 0")
        v0 = float(fn(0.0))
        if abs(v0) > 1e-12:
            raise ConstructionError(f"custom potential must have psi(0) = 0, got {v0}")
        return cls(kind="custom", lo=lo, hi=hi, fn=fn, prox_fn=prox)

    @classmethod
    def zero(cls) -> "ConvexPotential":
        return cls.abs_power(2.0, 0.0)

    # -- basic geometry ------------------------------------------------

    @property
    def domain(self) -> Tuple[float, float]:
        return (self.lo, self.hi)

    def project(self, x):
        """Projection onto the domain closure (clamp)."""
        arr, scalar = _as_array(x)
        return _ret(np.clip(arr, self.lo, self.hi), scalar)

    def dist_to_domain(self, x):
        arr, scalar = _as_array(x)
        return _ret(np.maximum(self.lo - arr, 0.0) + np.maximum(arr - self.hi, 0.0), scalar)

    # -- evaluation ----------------------------------------------------

    def eval(self, x):
        arr, scalar = _as_array(x)
        if self.kind == "indicator":
            out = np.where((arr >= self.lo) & (arr <= self.hi), 0.0, math.inf)
        elif self.kind == "abs_power":
            out = self.scale * np.abs(arr) ** self.power
        elif self.kind == "max_affine":
            slopes = np.array([a for a, _ in self.pieces])
            icepts = np.array([b for _, b in self.pieces])
            out = np.max(arr[..., None] * slopes + icepts, axis=-1)
        else:
            out = np.asarray(self.fn(arr), dtype=float)
            if np.isfinite(self.lo) or np.isfinite(self.hi):
                out = np.where((arr >= self.lo) & (arr <= self.hi), out, math.inf)
        return _ret(out, scalar)

    __call__ = eval

    # -- resolvent / envelope / gradient -------------------------------

    def prox(self, x, level: float):
        """Minimizer of (level/2)(y - x)^2 + psi(y); the resolvent point.

        Always lies in the domain closure, between 0 and x.
        """
        if level <= 0:
            raise ConstructionError(f"penalization level must be > 0, got {level}")
        arr, scalar = _as_array(x)
        n = float(level)
        if self.kind == "indicator":
            return _ret(np.clip(arr, self.lo, self.hi), scalar)
        flat = np.atleast_1d(arr).ravel()
        if self.kind == "abs_power":
            out = self._prox_abs_power(flat, n)
        elif self.kind == "max_affine":
            out = self._prox_max_affine(flat, n)
        elif self.prox_fn is not None:
            out = np.asarray(self.prox_fn(flat, n), dtype=float)
        else:
            out = self._prox_numeric(flat, n)
        return _ret(out.reshape(arr.shape), scalar)

    def moreau(self, x, level: float):
        """Smoothed value (level/2)|x - prox|^2 + psi(prox)."""
        arr, scalar = _as_array(x)
        j = self.prox(arr, level)
        out = 0.5 * level * (arr - j) ** 2 + self.eval(j)
        return _ret(out, scalar)

    def yosida_grad(self, x, level: float):
        """Gradient of the smoothed potential: level * (x - prox)."""
        arr, scalar = _as_array(x)
        n = float(level)
        if self.kind == "indicator":
            out = n * (arr - np.clip(arr, self.lo, self.hi))
        elif self.kind == "abs_power" and self.scale == 0.0:
            out = np.zeros_like(arr)
        elif self.kind == "abs_power" and self.power == 1.0:
            out = np.clip(n * arr, -self.scale, self.scale)
        elif self.kind == "abs_power" and self.power == 2.0:
            out = (2.0 * n * self.scale / (n + 2.0 * self.scale)) * arr
        else:
            out = n * (arr - self.prox(arr, n))
        return _ret(out, scalar)

    def _prox_abs_power(self, arr, n):
        s, p = self.scale, self.power
        if s == 0.0:
            return arr.copy()
        if p == 1.0:
            return np.sign(arr) * np.maximum(np.abs(arr) - s / n, 0.0)
        if p == 2.0:
            return arr * (n / (n + 2.0 * s))
        # general p > 1: root of n(y - |x|) + s p y^(p-1) on [0, |x|]
        ax = np.abs(arr)
        lo = np.zeros_like(ax)
        hi = ax.copy()
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            g = n * (mid - ax) + s * p * mid ** (p - 1.0)
            hi = np.where(g > 0.0, mid, hi)
            lo = np.where(g > 0.0, lo, mid)
            if np.all(hi - lo <= 1e-15 * (1.0 + ax)):
                break
        return np.sign(arr) * 0.5 * (lo + hi)

    def _prox_max_affine(self, arr, n):
        slopes = np.array([a for a, _ in self.pieces])
        icepts = np.array([b for _, b in self.pieces])
        # smooth candidates per piece, plus envelope kinks (x independent)
        cands = [arr[None, ...] - slopes[:, None] / n]
        kinks = []
        for i in range(len(slopes)):
            for j in range(i + 1, len(slopes)):
                if slopes[i] != slopes[j]:
                    kinks.append((icepts[j] - icepts[i]) / (slopes[i] - slopes[j]))
        if kinks:
            cands.append(np.broadcast_to(np.array(kinks)[:, None], (len(kinks),) + arr.shape))
        cand = np.concatenate(cands, axis=0)
        vals = 0.5 * n * (cand - arr[None, ...]) ** 2 + np.max(
            cand[..., None] * slopes + icepts, axis=-1
        )
        pick = np.argmin(vals, axis=0)
        return np.take_along_axis(cand, pick[None, ...], axis=0)[0]

    def _prox_numeric(self, arr, n):
        # psi(0) = 0 = min psi forces the prox point between 0 and x, so
        # [min(0,x), max(0,x)] brackets it.  Golden section narrows the
        # bracket while objective comparisons are still above the float
        # noise floor; bisection on the optimality condition
        # n(y - x) + dpsi(y) = 0 then resolves the root to ~1e-12, which
        # value comparisons alone cannot reach.
        lo = np.minimum(arr, 0.0)
        hi = np.maximum(arr, 0.0)

        def psi_vals(y):
            v = np.asarray(self.fn(y), dtype=float)
            if np.isfinite(self.lo) or np.isfinite(self.hi):
                v = np.where((y >= self.lo) & (y <= self.hi), v, math.inf)
            if np.any(np.isnan(v)):
                raise NumericNonconvergence("custom potential returned NaN during prox search")
            return v

        def objective(y):
            return 0.5 * n * (y - arr) ** 2 + psi_vals(y)

        golden_budget = _PROX_BUDGET // 4
        stop = np.maximum(1e-5, 1e-5 * np.abs(arr))
        for _ in range(golden_budget):
            if np.all(hi - lo <= stop):
                break
            c = hi - _GOLD * (hi - lo)
            d = lo + _GOLD * (hi - lo)
            go_left = objective(c) < objective(d)
            hi = np.where(go_left, d, hi)
            lo = np.where(go_left, lo, c)

        h = 1e-7
        dlo, dhi = self.lo, self.hi

        def opt_gap(y):
            # monotone surrogate for n(y-x) + dpsi(y); +-inf steers the
            # search back into the effective domain
            plus = psi_vals(np.minimum(y + h, dhi))
            minus = psi_vals(np.maximum(y - h, dlo))
            quot = (plus - minus) / (np.minimum(y + h, dhi) - np.maximum(y - h, dlo))
            quot = np.where(y > dhi, math.inf, quot)
            quot = np.where(y < dlo, -math.inf, quot)
            return n * (y - arr) + quot

        # inflate past any golden-section noise before bisecting
        pad = 10.0 * stop
        lo = np.maximum(np.minimum(arr, 0.0), lo - pad)
        hi = np.minimum(np.maximum(arr, 0.0), hi + pad)
        for _ in range(_PROX_BUDGET - golden_budget):
            mid = 0.5 * (lo + hi)
            high = opt_gap(mid) > 0.0
            hi = np.where(high, mid, hi)
            lo = np.where(high, lo, mid)
            if np.all(hi - lo <= _PROX_TOL):
                break
        return np.clip(0.5 * (lo + hi), self.lo, self.hi)

    # -- subdifferential -----------------------------------------------

    def subdifferential(self, x: float):
        """Closed interval [z_lo, z_hi] of subgradients, or None if empty.

        Half-infinite normal cones at domain endpoints use +-inf sentinels.
        """
        x = float(x)
        if x < self.lo or x > self.hi:
            return None
        if self.kind == "indicator":
            zlo = -math.inf if x == self.lo else 0.0
            zhi = math.inf if x == self.hi else 0.0
            return (zlo, zhi)
        if self.kind == "abs_power":
            s, p = self.scale, self.power
            if s == 0.0:
                return (0.0, 0.0)
            if x == 0.0:
                if p == 1.0:
                    return (-s, s)
                return (0.0, 0.0)
            g = s * p * abs(x) ** (p - 1.0) * math.copysign(1.0, x)
            return (g, g)
        if self.kind == "max_affine":
            vals = [a * x + b for a, b in self.pieces]
            top = max(vals)
            act = [a for (a, _), v in zip(self.pieces, vals) if abs(v - top) <= 1e-12 * (1.0 + abs(top))]
            return (min(act), max(act))
        # custom: one-sided finite differences; +-inf at domain endpoints
        h = 1e-7
        fx = float(self.eval(x))
        if x - h < self.lo:
            dlo = -math.inf
        else:
            dlo = (fx - float(self.eval(x - h))) / h
        if x + h > self.hi:
            dhi = math.inf
        else:
            dhi = (float(self.eval(x + h)) - fx) / h
        return (dlo, dhi)


@dataclass(frozen=True)
class YosidaView:
    """A potential observed through its smooth approximation at one level."""

    potential: ConvexPotential
    level: float

    def __post_init__(self):
        if self.level <= 0:
            raise ConstructionError(f"penalization level must be > 0, got {self.level}")

    def prox(self, x):
        return self.potential.prox(x, self.level)

    def moreau(self, x):
        return self.potential.moreau(x, self.level)

    def grad(self, x):
        return self.potential.yosida_grad(x, self.level)
