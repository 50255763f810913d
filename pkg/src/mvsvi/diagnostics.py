"""Path diagnostics: the smoothed-absolute-value test function, moment and
refinement estimators, penalization growth fits, and the variational
inequality residual.

All expectation estimators report Monte Carlo standard errors alongside
point values because acceptance tolerances are expressed in standard-error
bands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    ConstructionError,
    GridMismatch,
    InsufficientSweep,
    SeedMismatch,
    TestPathOutsideDomain,
)
from .forward import ForwardSolution
from .potentials import ConvexPotential

__all__ = [
    "YamadaWatanabeFn",
    "cauchy_gap",
    "moment_report",
    "MomentReport",
    "penalization_growth",
    "GrowthReport",
    "vi_residual",
    "ViResidualReport",
    "rate_fit",
    "RateFit",
    "monotone_coupling",
]


# ---------------------------------------------------------------------------
# smoothed absolute value


class YamadaWatanabeFn:
    """Twice-differentiable surrogate for |x| with controlled curvature.

    Built from a density phi(x) = rho(x) / (x ln(delta)) on
    [eps/delta, eps] (mirrored for x < 0), where rho is a piecewise-linear
    taper: zero at both interval ends, a plateau of height r over the
    middle (1 - 2*eta) fraction.  r is fixed by the normalisation
    integral(phi) = 1 and must come out <= 2 so that
    phi(x) <= 2 / (x ln(delta)).  First and second antiderivatives are
    closed-form: each piece of phi is (alpha + beta/x)/ln(delta), whose
    integrals are combinations of x, ln x, and x ln x terms.

    The resulting V satisfies |x| - eps <= V(x) <= |x|,
    0 <= sgn(x) V'(x) <= 1, and 0 <= V''(x) <= 2/(|x| ln(delta)) with
    V'' supported on eps/delta <= |x| <= eps.
    """

    def __init__(self, epsilon: float, delta: float, taper: float = 0.1):
        if not (0.0 < epsilon < 1.0):
            raise ConstructionError(f"epsilon must be in (0,1), got {epsilon}")
        if delta <= 1.0:
            raise ConstructionError(f"delta must be > 1, got {delta}")
        if not (0.0 < taper < 0.4):
            raise ConstructionError(f"taper fraction must be in (0, 0.4), got {taper}")
        self.epsilon = float(epsilon)
        self.delta = float(delta)
        self.taper = float(taper)

        a = epsilon / delta
        b = epsilon
        span = b - a
        k1, k2 = a + taper * span, b - taper * span
        self._knots = np.array([a, k1, k2, b])
        # unit-height taper tau on each piece as alpha*x + beta
        ramp = 1.0 / (taper * span)
        alphas = np.array([ramp, 0.0, -ramp])
        betas = np.array([-a * ramp, 1.0, b * ramp])
        # normalisation: integral of tau(x)/x over [a, b]
        left, right = self._knots[:-1], self._knots[1:]
        seg = alphas * (right - left) + betas * np.log(right / left)
        unit_mass = float(seg.sum())
        r = math.log(delta) / unit_mass
        if r > 2.0:
            raise ConstructionError(
                f"taper normalisation needs plateau {r:.4f} > 2; "
                "widen the plateau (smaller taper fraction) or increase delta"
            )
        self.plateau = r
        scale = r / math.log(delta)
        self._alphas = alphas * scale
        self._betas = betas * scale
        # cumulative first integral (total mass exactly 1 by construction)
        # and cumulative second integral at the knots
        seg1 = self._alphas * (right - left) + self._betas * np.log(right / left)
        self._phi1 = np.concatenate(([0.0], np.cumsum(seg1)))
        seg2 = (
            self._phi1[:-1] * (right - left)
            + 0.5 * self._alphas * (right - left) ** 2
            + self._betas * (right * np.log(right / left) - (right - left))
        )
        self._v_knots = np.concatenate(([0.0], np.cumsum(seg2)))

    def _pieces(self, ax: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self._knots, ax, side="right") - 1, 0, 2)

    def second(self, x) -> np.ndarray:
        """V''(x): the taper density, supported on eps/delta <= |x| <= eps."""
        ax = np.abs(np.asarray(x, dtype=float))
        inside = (ax >= self._knots[0]) & (ax <= self._knots[-1])
        safe = np.where(inside, ax, 1.0)
        i = self._pieces(safe)
        val = (self._alphas[i] + self._betas[i] / safe)
        return np.where(inside, np.maximum(val, 0.0), 0.0)

    def first(self, x) -> np.ndarray:
        """V'(x) = sgn(x) * integral of the density up to |x|."""
        xa = np.asarray(x, dtype=float)
        ax = np.abs(xa)
        below = ax <= self._knots[0]
        above = ax >= self._knots[-1]
        safe = np.clip(ax, self._knots[0], self._knots[-1])
        i = self._pieces(safe)
        k0 = self._knots[i]
        mid = self._phi1[i] + self._alphas[i] * (safe - k0) + self._betas[i] * np.log(safe / k0)
        mag = np.where(below, 0.0, np.where(above, 1.0, np.clip(mid, 0.0, 1.0)))
        return np.sign(xa) * mag

    def value(self, x) -> np.ndarray:
        """V(x): even, V(0) = 0, squeezed between |x| - eps and |x|."""
        xa = np.asarray(x, dtype=float)
        ax = np.abs(xa)
        below = ax <= self._knots[0]
        above = ax >= self._knots[-1]
        safe = np.clip(ax, self._knots[0], self._knots[-1])
        i = self._pieces(safe)
        k0 = self._knots[i]
        d = safe - k0
        mid = (
            self._v_knots[i]
            + self._phi1[i] * d
            + 0.5 * self._alphas[i] * d * d
            + self._betas[i] * (safe * np.log(safe / k0) - d)
        )
        out = np.where(below, 0.0, np.where(above, self._v_knots[-1] + (ax - self._knots[-1]), mid))
        return out

    __call__ = value


# ---------------------------------------------------------------------------
# helpers shared by the estimators


def _path_matrix(sol) -> np.ndarray:
    return sol.particles if hasattr(sol, "particles") else sol.y


def _phi_matrix(sol) -> np.ndarray:
    return sol.phi if hasattr(sol, "phi") else sol.phi2


def _sup_abs(sol) -> np.ndarray:
    sup = getattr(sol, "sup_abs", None)
    if sup is not None:
        return sup
    return np.max(np.abs(_path_matrix(sol)), axis=1)


# ---------------------------------------------------------------------------
# refinement gap


def cauchy_gap(a: ForwardSolution, b: ForwardSolution, p: float = 2.0) -> float:
    """Pathwise sup-gap between a run and a refinement of it.

    Requires common seed, particle count, horizon, and a shared Brownian
    refinement base so the two runs ride the same noise.
    """
    if p < 1:
        raise ConstructionError(f"gap order must be >= 1, got {p}")
    if a.seed != b.seed:
        raise SeedMismatch("refinement gap needs runs with a common seed")
    ca, cb = a.config, b.config
    if ca.horizon != cb.horizon or ca.particles != cb.particles:
        raise GridMismatch("refinement gap needs a common horizon and particle count")
    if ca.path_stride != 1 or cb.path_stride != 1:
        raise GridMismatch("refinement gap needs fully stored paths (path_stride 1)")
    if cb.steps % ca.steps != 0:
        raise GridMismatch(
            f"fine grid ({cb.steps}) must refine coarse grid ({ca.steps}) by an integer factor"
        )
    if ca.noise_steps != cb.noise_steps:
        raise GridMismatch(
            "runs do not share a Brownian refinement base; set crn_base_steps on both"
        )
    factor = cb.steps // ca.steps
    diff = np.abs(a.particles - b.particles[:, ::factor])
    per_particle = diff.max(axis=1)
    return float(np.mean(per_particle**p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# moment report


@dataclass(frozen=True)
class MomentEntry:
    order: float
    estimate: float
    std_error: float
    ratio: float


@dataclass(frozen=True)
class MomentReport:
    entries: Tuple[MomentEntry, ...]

    def __getitem__(self, p: float) -> MomentEntry:
        for e in self.entries:
            if e.order == p:
                return e
        raise KeyError(p)

    def to_dict(self) -> dict:
        return {
            "moments": [
                {
                    "order": e.order,
                    "estimate": e.estimate,
                    "std_error": e.std_error,
                    "ratio": e.ratio,
                }
                for e in self.entries
            ]
        }


def moment_report(sol, orders: Sequence[float]) -> MomentReport:
    """Estimate E sup_k |path_k|^p and its ratio against 1 + E|initial|^p."""
    sup = _sup_abs(sol)
    init = np.abs(_path_matrix(sol)[:, 0])
    n = sup.size
    entries = []
    for p in orders:
        per = sup**p
        est = float(per.mean())
        se = float(per.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        denom = 1.0 + float(np.mean(init**p))
        entries.append(MomentEntry(float(p), est, se, est / denom))
    return MomentReport(tuple(entries))


# ---------------------------------------------------------------------------
# penalization growth


@dataclass(frozen=True)
class GrowthReport:
    slope: float
    intercept: float
    levels: Tuple[float, ...]
    values: Tuple[float, ...]
    std_errors: Tuple[float, ...]
    degenerate: bool
    passed: bool


GROWTH_SLOPE_BOUND = 3.5 + 0.5


def penalization_growth(sweep: Sequence[Tuple[float, ForwardSolution]]) -> GrowthReport:
    """Fit log E sup_k |grad_n(X_k)|^4 against log n over a sweep."""
    if len(sweep) < 3:
        raise InsufficientSweep(f"growth fit needs >= 3 sweep points, got {len(sweep)}")
    levels, values, errors = [], [], []
    for level, sol in sweep:
        if sol.sup_pen_grad is None:
            raise ConstructionError("sweep solutions must carry penalization gradients")
        per = sol.sup_pen_grad**4
        levels.append(float(level))
        values.append(float(per.mean()))
        errors.append(float(per.std(ddof=1) / math.sqrt(per.size)) if per.size > 1 else 0.0)
    if max(values) <= 0.0:
        return GrowthReport(
            math.nan, math.nan, tuple(levels), tuple(values), tuple(errors), True, True
        )
    slope, intercept = np.polyfit(np.log(levels), np.log(np.maximum(values, 1e-300)), 1)
    return GrowthReport(
        float(slope), float(intercept), tuple(levels), tuple(values), tuple(errors),
        False, bool(slope <= GROWTH_SLOPE_BOUND),
    )


# ---------------------------------------------------------------------------
# variational inequality residual


@dataclass(frozen=True)
class ViResidualReport:
    residuals: np.ndarray
    max_residual: float
    tolerance: float
    passed: bool


def vi_residual(
    sol,
    psi: ConvexPotential,
    rho: Union[float, Callable[[np.ndarray], np.ndarray]],
    tolerance: Optional[float] = None,
) -> ViResidualReport:
    """Discretised variational inequality defect against a test path.

    For each particle, left-endpoint Stieltjes sums give

        r_i = sum_k (rho(t_k) - X_k) dphi_k
            + dt * sum_k psi(X_k) - dt * sum_k psi(rho(t_k)),

    which must be <= 0 (up to tolerance) for a genuine solution.
    """
    times = sol.times
    x = _path_matrix(sol)
    dphi = _phi_matrix(sol)
    k = dphi.shape[1]
    dt = float(times[1] - times[0])
    t_left = times[:-1]
    rho_vals = np.full(k, float(rho)) if np.isscalar(rho) else np.asarray(rho(t_left), dtype=float)
    if float(np.max(psi.dist_to_domain(rho_vals))) > 0.0:
        raise TestPathOutsideDomain("test path leaves the potential domain closure")
    x_left = x[:, :-1]
    stieltjes = np.sum((rho_vals[None, :] - x_left) * dphi, axis=1)
    psi_path = np.sum(psi.eval(x_left), axis=1) * dt
    psi_rho = float(np.sum(psi.eval(rho_vals))) * dt
    residuals = stieltjes + psi_path - psi_rho
    scale = float(np.max(np.abs(x)))
    tol = tolerance if tolerance is not None else 1e-6 * (1.0 + scale)
    max_res = float(np.max(residuals))
    return ViResidualReport(residuals, max_res, tol, bool(max_res <= tol))


# ---------------------------------------------------------------------------
# rate fit and monotone coupling


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float


def rate_fit(pairs: Sequence[Tuple[float, float]]) -> RateFit:
    """Least-squares slope of log(gap) against log(resolution)."""
    if len(pairs) < 3 or any(r <= 0 or g <= 0 for r, g in pairs):
        raise InsufficientSweep(
            f"rate fit needs >= 3 pairs with positive entries, got {pairs!r}"
        )
    xs = np.log([r for r, _ in pairs])
    ys = np.log([g for _, g in pairs])
    slope, intercept = np.polyfit(xs, ys, 1)
    return RateFit(float(slope), float(intercept))


def monotone_coupling(a: ForwardSolution, b: ForwardSolution) -> np.ndarray:
    """Per-particle sum_k (X_k - X'_k)(dphi_k - dphi'_k) for coupled runs."""
    if a.seed != b.seed:
        raise SeedMismatch("monotone coupling needs runs with a common seed")
    if a.particles.shape != b.particles.shape:
        raise GridMismatch("monotone coupling needs identically shaped solutions")
    dx = a.particles[:, :-1] - b.particles[:, :-1]
    dphi = a.phi - b.phi
    return np.sum(dx * dphi, axis=1)
