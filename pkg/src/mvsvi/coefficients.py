"""Coefficient descriptors and assumption validators.

Drift and diffusion are deterministic functions of (t, x, measure stats);
adaptedness is then automatic.  Built-in descriptors touch the measure only
through its mean and absolute moments so the solver hot path stays
allocation-free; custom callbacks receive the full MeasureStats view and
must be reentrant.

validate_assumptions is a sampling falsifier, not a certifier: it reports
the worst observed ratio of each growth/modulus condition against its
bound on a seeded grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import ConstructionError, NonFiniteCoefficient
from .measures import EmpiricalMeasure, MeasureStats, wasserstein

__all__ = [
    "ForwardCoefficients",
    "BackwardCoefficients",
    "AssumptionProfile",
    "GridSpec",
    "ValidationReport",
    "drift_constant",
    "drift_mean_field_linear",
    "drift_custom",
    "diffusion_constant",
    "diffusion_power",
    "diffusion_custom",
    "driver_zero",
    "driver_linear",
    "driver_capped_power",
    "driver_custom",
    "terminal_identity",
    "terminal_square",
    "terminal_linear",
    "terminal_custom",
    "validate_assumptions",
]


# ---------------------------------------------------------------------------
# forward descriptors


@dataclass(frozen=True)
class _Drift:
    kind: str
    a: float = 0.0
    bbar: float = 0.0
    value: float = 0.0
    fn: Optional[Callable] = None

    def __call__(self, t, x, stats: MeasureStats):
        if self.kind == "constant":
            return self.value
        if self.kind == "mean_field_linear":
            return self.a * x + self.bbar * stats.mean
        return self.fn(t, x, stats)


@dataclass(frozen=True)
class _Diffusion:
    kind: str
    c: float = 0.0
    theta: float = 1.0
    smoothing: float = 0.0
    value: float = 0.0
    fn: Optional[Callable] = None

    def __call__(self, t, x):
        if self.kind == "constant":
            return self.value
        if self.kind == "power":
            return self.c * (self.smoothing + np.abs(x)) ** self.theta
        return self.fn(t, x)


def drift_constant(value: float) -> _Drift:
    return _Drift(kind="constant", value=float(value))


def drift_mean_field_linear(a: float, bbar: float) -> _Drift:
    return _Drift(kind="mean_field_linear", a=float(a), bbar=float(bbar))


def drift_custom(fn: Callable) -> _Drift:
    return _Drift(kind="custom", fn=fn)


def diffusion_constant(value: float) -> _Diffusion:
    return _Diffusion(kind="constant", value=float(value))


def diffusion_power(c: float, theta: float, smoothing: float = 0.0) -> _Diffusion:
    if theta <= 0.0 or theta > 1.0:
        raise ConstructionError(f"power diffusion exponent must be in (0, 1], got {theta}")
    if smoothing < 0.0:
        raise ConstructionError("power diffusion smoothing must be >= 0")
    return _Diffusion(kind="power", c=float(c), theta=float(theta), smoothing=float(smoothing))


def diffusion_custom(fn: Callable) -> _Diffusion:
    return _Diffusion(kind="custom", fn=fn)


@dataclass(frozen=True)
class ForwardCoefficients:
    drift: _Drift
    diffusion: _Diffusion

    def eval_drift(self, t, x, stats: MeasureStats):
        out = self.drift(t, x, stats)
        if not np.all(np.isfinite(out)):
            raise NonFiniteCoefficient(f"drift returned a non-finite value at t={t}")
        return out

    def eval_diffusion(self, t, x):
        out = self.diffusion(t, x)
        if not np.all(np.isfinite(out)):
            raise NonFiniteCoefficient(f"diffusion returned a non-finite value at t={t}")
        return out

    def suggested_profile(self) -> "AssumptionProfile":
        """Constants under which the built-in kinds satisfy their bounds."""
        cs = [1e-12]
        if self.drift.kind == "constant":
            cs.append(abs(self.drift.value))
        elif self.drift.kind == "mean_field_linear":
            cs.append(max(abs(self.drift.a), abs(self.drift.bbar)))
        if self.diffusion.kind == "constant":
            cs.append(abs(self.diffusion.value))
        elif self.diffusion.kind == "power":
            d = self.diffusion
            cs.append(abs(d.c) * (1.0 + d.smoothing))
            cs.append(d.c * d.c)
        alpha = 0.5
        if self.diffusion.kind == "power" and self.diffusion.theta > 0.5:
            alpha = self.diffusion.theta - 0.5
        c = max(cs)
        return AssumptionProfile(growth_c=c, holder_alpha=alpha, log_modulus_c=c)


# ---------------------------------------------------------------------------
# backward descriptors


@dataclass(frozen=True)
class _Driver:
    kind: str
    coef_y: float = 0.0
    coef_z: float = 0.0
    const: float = 0.0
    cap_k: float = 0.5
    fn: Optional[Callable] = None

    def __call__(self, t, x, y, z, mu: MeasureStats, nu: MeasureStats):
        if self.kind == "zero":
            return 0.0
        if self.kind == "linear":
            return self.coef_y * y + self.coef_z * z + self.const
        if self.kind == "capped_power":
            return self.coef_y * np.sign(y) * np.abs(y) ** self.cap_k + self.const
        return self.fn(t, x, y, z, mu, nu)


@dataclass(frozen=True)
class _Terminal:
    kind: str
    a: float = 1.0
    const: float = 0.0
    fn: Optional[Callable] = None

    def __call__(self, x, mu: MeasureStats):
        if self.kind == "identity":
            return x
        if self.kind == "square":
            return x * x
        if self.kind == "linear":
            return self.a * x + self.const
        return self.fn(x, mu)


def driver_zero() -> _Driver:
    return _Driver(kind="zero")


def driver_linear(coef_y: float = 0.0, coef_z: float = 0.0, const: float = 0.0) -> _Driver:
    return _Driver(kind="linear", coef_y=float(coef_y), coef_z=float(coef_z), const=float(const))


def driver_capped_power(coef: float, k: float, const: float = 0.0) -> _Driver:
    if not (0.0 < k < 1.0):
        raise ConstructionError(f"capped driver exponent must be in (0, 1), got {k}")
    return _Driver(kind="capped_power", coef_y=float(coef), cap_k=float(k), const=float(const))


def driver_custom(fn: Callable) -> _Driver:
    return _Driver(kind="custom", fn=fn)


def terminal_identity() -> _Terminal:
    return _Terminal(kind="identity")


def terminal_square() -> _Terminal:
    return _Terminal(kind="square")


def terminal_linear(a: float, const: float = 0.0) -> _Terminal:
    return _Terminal(kind="linear", a=float(a), const=float(const))


def terminal_custom(fn: Callable) -> _Terminal:
    return _Terminal(kind="custom", fn=fn)


@dataclass(frozen=True)
class BackwardCoefficients:
    driver: _Driver
    terminal: _Terminal
    growth_l: float = 2.0
    growth_k: float = 0.5

    def __post_init__(self):
        if self.growth_l <= 1.0:
            raise ConstructionError(f"driver growth exponent l must be > 1, got {self.growth_l}")
        if not (0.0 < self.growth_k < 1.0):
            raise ConstructionError(f"driver growth exponent k must be in (0,1), got {self.growth_k}")

    def eval_driver(self, t, x, y, z, mu: MeasureStats, nu: MeasureStats):
        out = self.driver(t, x, y, z, mu, nu)
        if not np.all(np.isfinite(out)):
            raise NonFiniteCoefficient(f"driver returned a non-finite value at t={t}")
        return out

    def eval_terminal(self, x, mu: MeasureStats):
        out = self.terminal(x, mu)
        if not np.all(np.isfinite(out)):
            raise NonFiniteCoefficient("terminal function returned a non-finite value")
        return out


# ---------------------------------------------------------------------------
# assumption profile and sampling validator


@dataclass(frozen=True)
class AssumptionProfile:
    """Constants parameterising the growth and modulus bounds.

    lip_table pairs (R, L_R) exist for user experiments with local
    Lipschitz drivers; built-in drivers are globally Lipschitz in (y, z),
    which satisfies the e^{L_R^2} <= C(1+R) certification trivially.
    """

    growth_c: float = 1.0
    holder_alpha: float = 0.5
    log_modulus_c: float = 1.0
    lip_table: Tuple[Tuple[float, float], ...] = ()
    trunc_radius: float = math.inf

    def __post_init__(self):
        if self.growth_c <= 0 or self.log_modulus_c <= 0:
            raise ConstructionError("assumption constants must be positive")
        if not (0.0 < self.holder_alpha <= 0.5):
            raise ConstructionError(
                f"Holder index must be in (0, 1/2], got {self.holder_alpha}"
            )

    def lip_table_certified(self) -> bool:
        """Check e^{L_R^2} <= C(1+R) on every table row."""
        return all(
            math.exp(l_r * l_r) <= self.growth_c * (1.0 + r) for r, l_r in self.lip_table
        )


@dataclass(frozen=True)
class GridSpec:
    x_max: float = 50.0
    pairs: int = 10_000
    t_samples: int = 4
    horizon: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class ConditionReport:
    name: str
    worst_ratio: float
    passed: bool


@dataclass(frozen=True)
class ValidationReport:
    conditions: Tuple[ConditionReport, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name: str) -> ConditionReport:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)


_FAIL_SLACK = 1e-9


def _test_measures(rng) -> list[EmpiricalMeasure]:
    out = [EmpiricalMeasure.from_samples([0.0])]
    for scale, shift in [(1.0, 0.0), (3.0, 2.0), (0.5, -1.0)]:
        out.append(EmpiricalMeasure.from_samples(rng.normal(shift, scale, size=32)))
    return out


def validate_assumptions(coeffs, profile: AssumptionProfile, grid: GridSpec = GridSpec()) -> ValidationReport:
    """Sample the growth/modulus conditions and report worst ratios.

    Forward coefficients are checked against linear growth, the
    log-modulus local Lipschitz bound for the drift, and the squared
    Holder modulus for the diffusion; backward coefficients against the
    driver growth bound and terminal growth/Lipschitz bounds.
    """
    rng = np.random.default_rng(grid.seed)
    xs = rng.uniform(-grid.x_max, grid.x_max, size=grid.pairs)
    xs2 = rng.uniform(-grid.x_max, grid.x_max, size=grid.pairs)
    ts = np.linspace(0.0, grid.horizon, grid.t_samples)
    measures = _test_measures(rng)
    c, c_log, alpha = profile.growth_c, profile.log_modulus_c, profile.holder_alpha
    conds: list[ConditionReport] = []

    def add(name: str, ratio: float):
        conds.append(ConditionReport(name, float(ratio), bool(ratio <= 1.0 + _FAIL_SLACK)))

    if isinstance(coeffs, ForwardCoefficients):
        worst_bg = worst_bm = worst_sg = worst_sh = 0.0
        for t in ts:
            for mu in measures:
                for nu in measures:
                    smu, snu = MeasureStats(mu.samples), MeasureStats(nu.samples)
                    b1 = np.broadcast_to(coeffs.eval_drift(t, xs, smu), xs.shape)
                    b2 = np.broadcast_to(coeffs.eval_drift(t, xs2, snu), xs.shape)
                    worst_bg = max(
                        worst_bg,
                        float(np.max(np.abs(b1) / (c * (1.0 + np.abs(xs) + mu.moment(1.0))))),
                    )
                    w1 = wasserstein(1.0, mu, nu)
                    mod = (c_log * np.log(math.e + np.abs(xs) + np.abs(xs2)) + mu.moment(1.0) + nu.moment(1.0)) * (
                        np.abs(xs - xs2) + w1
                    )
                    gap = np.abs(b1 - b2)
                    keep = mod > 0
                    if np.any(keep):
                        worst_bm = max(worst_bm, float(np.max(gap[keep] / mod[keep])))
            s1 = np.broadcast_to(coeffs.eval_diffusion(t, xs), xs.shape)
            s2 = np.broadcast_to(coeffs.eval_diffusion(t, xs2), xs.shape)
            worst_sg = max(worst_sg, float(np.max(np.abs(s1) / (c * (1.0 + np.abs(xs))))))
            hol = c * np.log(math.e + np.abs(xs) + np.abs(xs2)) * np.abs(xs - xs2) ** (2.0 * alpha + 1.0)
            keep = hol > 0
            if np.any(keep):
                worst_sh = max(worst_sh, float(np.max((s1 - s2)[keep] ** 2 / hol[keep])))
        add("drift_linear_growth", worst_bg)
        add("drift_log_modulus", worst_bm)
        add("diffusion_linear_growth", worst_sg)
        add("diffusion_holder_squared", worst_sh)
    elif isinstance(coeffs, BackwardCoefficients):
        el, ek = coeffs.growth_l, coeffs.growth_k
        ys = rng.uniform(-grid.x_max, grid.x_max, size=grid.pairs)
        zs = rng.uniform(-grid.x_max, grid.x_max, size=grid.pairs)
        worst_fg = worst_gg = worst_gl = 0.0
        for t in ts:
            for mu in measures:
                for nu in measures:
                    smu, snu = MeasureStats(mu.samples), MeasureStats(nu.samples)
                    f = np.broadcast_to(coeffs.eval_driver(t, xs, ys, zs, smu, snu), xs.shape)
                    bound = c * (
                        1.0
                        + np.abs(xs) ** el
                        + np.abs(ys) ** ek
                        + np.abs(zs) ** ek
                        + mu.moment(el) ** (1.0 / el)
                        + math.sqrt(nu.moment(2.0))
                    )
                    worst_fg = max(worst_fg, float(np.max(np.abs(f) / bound)))
                    g1 = np.broadcast_to(coeffs.eval_terminal(xs, smu), xs.shape)
                    g2 = np.broadcast_to(coeffs.eval_terminal(xs2, snu), xs.shape)
                    worst_gg = max(
                        worst_gg,
                        float(np.max(np.abs(g1) / (c * (1.0 + np.abs(xs) + mu.moment(1.0))))),
                    )
                    lip = c * (np.abs(xs - xs2) + wasserstein(1.0, mu, nu))
                    keep = lip > 0
                    if np.any(keep):
                        worst_gl = max(worst_gl, float(np.max(np.abs(g1 - g2)[keep] / lip[keep])))
        add("driver_growth", worst_fg)
        add("terminal_growth", worst_gg)
        add("terminal_lipschitz", worst_gl)
    else:
        raise ConstructionError(f"cannot validate object of type {type(coeffs).__name__}")
    return ValidationReport(tuple(conds))
