"""Runnable property suites.

Each suite exercises one family of inequalities the solvers and operators
are expected to satisfy, and returns structured results; the pytest suite
asserts on them and the CLI's check-properties verb serialises them.
Margins are signed distances from the binding bound: positive means the
check holds with room to spare.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy.integrate import quad

from .coefficients import (
    ForwardCoefficients,
    diffusion_constant,
    diffusion_power,
    drift_constant,
    drift_mean_field_linear,
)
from .diagnostics import (
    YamadaWatanabeFn,
    monotone_coupling,
    moment_report,
    penalization_growth,
    vi_residual,
)
from .errors import UnknownSuite
from .forward import InitialLaw, SolverConfig, simulate_mvsde, simulate_mvsvi_penalized, simulate_reflected_projection
from .measures import EmpiricalMeasure, wasserstein
from .potentials import ConvexPotential

__all__ = ["PropertyCheck", "run_suite", "SUITE_NAMES"]

CLOSED_FORM_TOL = 1e-9
CUSTOM_TOL = 1e-6
LEVELS = (1.0, 4.0, 16.0, 256.0)


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "margin": self.margin,
            "detail": self.detail,
        }


def _grid_for(psi: ConvexPotential, points: int, rng) -> np.ndarray:
    lo = psi.lo if math.isfinite(psi.lo) else -2.0
    hi = psi.hi if math.isfinite(psi.hi) else 2.0
    pad = 0.5 * (hi - lo)
    xs = np.linspace(lo - pad, hi + pad, points - points // 4)
    extra = rng.uniform(lo - pad, hi + pad, size=points // 4)
    return np.concatenate([xs, extra])


def _yosida_checks(label: str, psi: ConvexPotential, tol: float, points: int, rng) -> List[PropertyCheck]:
    xs = _grid_for(psi, points, rng)
    ys = rng.permutation(xs)
    out: List[PropertyCheck] = []

    worst_cross = math.inf
    worst_lip = math.inf
    for n in LEVELS:
        gx = psi.yosida_grad(xs, n)
        for m in LEVELS:
            gy = psi.yosida_grad(ys, m)
            lhs = (xs - ys) * (gx - gy)
            rhs = -(1.0 / n + 1.0 / m) * gx * gy
            worst_cross = min(worst_cross, float(np.min(lhs - rhs)))
        gy_n = psi.yosida_grad(ys, n)
        worst_lip = min(worst_lip, float(np.min(n * np.abs(xs - ys) - np.abs(gx - gy_n))))
    out.append(PropertyCheck(f"{label}.cross_monotonicity", worst_cross >= -tol, worst_cross))
    out.append(PropertyCheck(f"{label}.gradient_lipschitz", worst_lip >= -tol, worst_lip))

    worst_env = 0.0
    worst_sandwich = math.inf
    worst_nonexp = math.inf
    for n in LEVELS:
        j = psi.prox(xs, n)
        g = psi.yosida_grad(xs, n)
        env = psi.moreau(xs, n)
        gap = np.abs(env - (psi.eval(j) + 0.5 / n * g * g))
        worst_env = max(worst_env, float(np.max(gap)))
        pe = psi.eval(xs)
        low = env - psi.eval(j)
        high = np.where(np.isinf(pe), math.inf, pe - env)
        worst_sandwich = min(worst_sandwich, float(np.min(low)), float(np.min(high)))
        jy = psi.prox(ys, n)
        worst_nonexp = min(worst_nonexp, float(np.min(np.abs(xs - ys) - np.abs(j - jy))))
    out.append(PropertyCheck(f"{label}.envelope_identity", worst_env <= tol, tol - worst_env))
    out.append(PropertyCheck(f"{label}.sandwich", worst_sandwich >= -tol, worst_sandwich))
    out.append(PropertyCheck(f"{label}.resolvent_nonexpansive", worst_nonexp >= -tol, worst_nonexp))

    proj = psi.project(xs)
    gaps = [float(np.max(np.abs(psi.prox(xs, n) - proj))) for n in LEVELS]
    monotone = all(gaps[i] >= gaps[i + 1] - tol for i in range(len(gaps) - 1))
    detail = "gaps " + ", ".join(f"{g:.3e}" for g in gaps)
    if psi.kind == "indicator":
        tail = float(np.max(np.abs(psi.prox(xs, 1e6) - proj)))
        monotone = monotone and tail < 1e-3
        detail += f"; gap at n=1e6: {tail:.3e}"
    out.append(
        PropertyCheck(
            f"{label}.resolvent_limit",
            monotone,
            min(gaps[i] - gaps[i + 1] for i in range(len(gaps) - 1)) if len(gaps) > 1 else 0.0,
            detail,
        )
    )

    # maximal monotonicity spot check on subdifferential selections
    spots = rng.choice(xs, size=min(40, xs.size), replace=False)
    worst_mono = math.inf
    sel: List[Tuple[float, float]] = []
    for x in spots:
        sub = psi.subdifferential(float(x))
        if sub is None:
            continue
        zlo, zhi = sub
        if math.isinf(zlo) and math.isinf(zhi):
            z = 0.0
        elif math.isinf(zlo):
            z = zhi - 1.0  # interior of the normal cone
        elif math.isinf(zhi):
            z = zlo + 1.0
        else:
            z = 0.5 * (zlo + zhi)
        sel.append((float(x), z))
    for x, z in sel:
        for x2, z2 in sel:
            worst_mono = min(worst_mono, (x - x2) * (z - z2))
    out.append(PropertyCheck(f"{label}.subdifferential_monotone", worst_mono >= -tol, worst_mono))
    return out


def suite_convex(points: int = 1000, seed: int = 2024) -> List[PropertyCheck]:
    rng = np.random.default_rng(seed)
    cases = [
        ("indicator_01", ConvexPotential.indicator_interval(0.0, 1.0), CLOSED_FORM_TOL),
        ("indicator_half_line", ConvexPotential.indicator_interval(-1.0, math.inf), CLOSED_FORM_TOL),
        ("abs_power_1", ConvexPotential.abs_power(1.0, 1.0), CLOSED_FORM_TOL),
        ("abs_power_2", ConvexPotential.abs_power(2.0, 0.5), CLOSED_FORM_TOL),
        ("abs_power_15", ConvexPotential.abs_power(1.5, 2.0), CLOSED_FORM_TOL),
        ("max_affine", ConvexPotential.max_affine([(1.0, 0.0), (-1.0, 0.0), (3.0, -2.0)]), CLOSED_FORM_TOL),
        ("custom_abs", ConvexPotential.custom(lambda x: np.abs(np.asarray(x, dtype=float))), CUSTOM_TOL),
    ]
    out: List[PropertyCheck] = []
    for label, psi, tol in cases:
        out.extend(_yosida_checks(label, psi, tol, points, rng))
    return out


def suite_yw(points: int = 10_000) -> List[PropertyCheck]:
    out: List[PropertyCheck] = []
    tol = 1e-10
    for eps in (0.1, 0.01):
        for delta in (2.0, 4.0):
            f = YamadaWatanabeFn(eps, delta)
            label = f"yw_eps{eps}_delta{delta}"
            xs = np.linspace(-2.0, 2.0, points)
            v, v1, v2 = f.value(xs), f.first(xs), f.second(xs)
            m_abs = float(np.min(np.abs(xs) - v))
            m_eps = float(np.min(v - (np.abs(xs) - eps)))
            out.append(PropertyCheck(f"{label}.value_bounds", min(m_abs, m_eps) >= -tol, min(m_abs, m_eps)))
            s = np.sign(xs) * v1
            m1 = min(float(np.min(s)), float(np.min(1.0 - s)))
            out.append(PropertyCheck(f"{label}.derivative_bounds", m1 >= -tol, m1))
            cap = 2.0 / (np.maximum(np.abs(xs), 1e-12) * math.log(delta))
            m2 = min(float(np.min(v2)), float(np.min(cap - v2)))
            strictly_out = (np.abs(xs) < eps / delta - 1e-12) | (np.abs(xs) > eps + 1e-12)
            support_ok = bool(np.all(v2[strictly_out] == 0.0))
            out.append(PropertyCheck(f"{label}.curvature_bounds", (m2 >= -tol) and support_ok, m2))
            mass, _ = quad(
                lambda z: float(f.second(z)), eps / delta, eps,
                points=list(f._knots), limit=200, epsabs=1e-13, epsrel=1e-13,
            )
            out.append(PropertyCheck(f"{label}.unit_mass", abs(mass - 1.0) <= 1e-10, 1e-10 - abs(mass - 1.0)))
            out.append(PropertyCheck(f"{label}.plateau_cap", f.plateau <= 2.0, 2.0 - f.plateau))
            # finite differences reproduce the closed-form derivatives away
            # from breakpoints: relative error bounded, and halving h cuts
            # the curvature error by ~4 (second order)
            h = 1e-4
            probe = xs[np.min(np.abs(np.abs(xs)[:, None] - f._knots[None, :]), axis=1) > 10 * h]
            errs = {}
            for hh in (h, h / 2):
                fd2 = (f.value(probe + hh) - 2.0 * f.value(probe) + f.value(probe - hh)) / (hh * hh)
                fd1 = (f.value(probe + hh) - f.value(probe - hh)) / (2.0 * hh)
                errs[hh] = (
                    float(np.max(np.abs(fd1 - f.first(probe)))),
                    float(np.max(np.abs(fd2 - f.second(probe)) / (1.0 + np.abs(f.second(probe))))),
                )
            ratio1 = errs[h][0] / max(errs[h / 2][0], 1e-300)
            ratio2 = errs[h][1] / max(errs[h / 2][1], 1e-300)
            order_ok = (3.5 <= ratio1 <= 4.5 or errs[h][0] < 1e-10) and (
                3.5 <= ratio2 <= 4.5 or errs[h][1] < 1e-10
            )
            ok = order_ok and errs[h][0] <= 1e-3 and errs[h][1] <= 1e-3
            out.append(
                PropertyCheck(
                    f"{label}.finite_difference", ok, 1e-3 - max(errs[h]),
                    f"halving ratios {ratio1:.2f}, {ratio2:.2f}",
                )
            )
    return out


def _transport_lp(p: float, xs: np.ndarray, ys: np.ndarray) -> float:
    from scipy.optimize import linprog

    n, m = xs.size, ys.size
    cost = (np.abs(xs[:, None] - ys[None, :]) ** p).ravel()
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)])
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun ** (1.0 / p))


def suite_wasserstein(cases: int = 200, seed: int = 99) -> List[PropertyCheck]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 7))
        xs = rng.integers(-3, 4, size=n).astype(float)
        ys = rng.integers(-3, 4, size=m).astype(float)
        p = float(rng.choice([1.0, 2.0, 3.0, 1.5]))
        w = wasserstein(p, EmpiricalMeasure.from_samples(xs), EmpiricalMeasure.from_samples(ys))
        lp = _transport_lp(p, np.sort(xs), np.sort(ys))
        worst = max(worst, abs(w - lp))
    checks = [PropertyCheck("wasserstein.lp_oracle", worst <= 1e-10, 1e-10 - worst, f"{cases} cases")]

    worst_tri = math.inf
    worst_sym = 0.0
    worst_coupling = math.inf
    for _ in range(60):
        a = EmpiricalMeasure.from_samples(rng.normal(size=int(rng.integers(1, 9))))
        b = EmpiricalMeasure.from_samples(rng.normal(size=int(rng.integers(1, 9))))
        c = EmpiricalMeasure.from_samples(rng.normal(size=int(rng.integers(1, 9))))
        for p in (1.0, 2.0):
            worst_sym = max(worst_sym, abs(wasserstein(p, a, b) - wasserstein(p, b, a)))
            worst_tri = min(
                worst_tri,
                wasserstein(p, a, c) + wasserstein(p, c, b) - wasserstein(p, a, b),
            )
        k = int(rng.integers(1, 9))
        pair_a = rng.normal(size=k)
        pair_b = rng.normal(size=k)
        wab = wasserstein(1.0, EmpiricalMeasure.from_samples(pair_a), EmpiricalMeasure.from_samples(pair_b))
        worst_coupling = min(worst_coupling, float(np.mean(np.abs(pair_a - pair_b))) - wab)
        for _ in range(5):
            perm = rng.permutation(k)
            worst_coupling = min(
                worst_coupling, float(np.mean(np.abs(pair_a - pair_b[perm]))) - wab
            )
    checks.append(PropertyCheck("wasserstein.symmetry", worst_sym == 0.0, -worst_sym))
    checks.append(PropertyCheck("wasserstein.triangle", worst_tri >= -1e-12, worst_tri))
    checks.append(PropertyCheck("wasserstein.coupling_bound", worst_coupling >= -1e-12, worst_coupling))
    return checks


def _holder_forward() -> ForwardCoefficients:
    return ForwardCoefficients(drift_mean_field_linear(-0.5, 0.25), diffusion_power(1.0, 0.75))


def suite_moments(seed: int = 11) -> List[PropertyCheck]:
    fc = _holder_forward()
    ests = []
    for steps in (50, 100, 200, 400):
        cfg = SolverConfig(1.0, steps, 10_000, seed, InitialLaw.constant(1.0))
        ests.append(moment_report(simulate_mvsde(fc, cfg), [4.0])[4.0].estimate)
    factor = max(ests) / min(ests)
    checks = [
        PropertyCheck(
            "moments.refinement_stability", factor < 2.0, 2.0 - factor,
            "sup^4 estimates " + ", ".join(f"{e:.3f}" for e in ests),
        )
    ]
    ind = ConvexPotential.indicator_interval(0.0, math.inf)
    ests_n = []
    for level in (100.0, 1000.0, 10_000.0):
        steps = int(level)
        cfg = SolverConfig(
            1.0, steps, 4000, seed + 1, InitialLaw.constant(1.0),
            penalization=level, penalization_mode="explicit", path_stride=steps // 10,
        )
        ests_n.append(moment_report(simulate_mvsvi_penalized(fc, ind, cfg), [4.0])[4.0].estimate)
    factor_n = max(ests_n) / min(ests_n)
    checks.append(
        PropertyCheck(
            "moments.penalization_uniformity", factor_n < 2.0, 2.0 - factor_n,
            "sup^4 estimates " + ", ".join(f"{e:.3f}" for e in ests_n),
        )
    )
    return checks


def suite_penalization(seed: int = 7) -> List[PropertyCheck]:
    fc = ForwardCoefficients(drift_constant(0.0), diffusion_constant(1.0))
    ind = ConvexPotential.indicator_interval(0.0, math.inf)
    sweep = []
    viols = []
    bv2 = []
    for level in (100.0, 1000.0, 10_000.0):
        steps = int(level)
        cfg = SolverConfig(
            1.0, steps, 2000, seed, InitialLaw.constant(0.0),
            penalization=level, penalization_mode="explicit", path_stride=steps // 10,
        )
        sol = simulate_mvsvi_penalized(fc, ind, cfg)
        sweep.append((level, sol))
        viols.append(float(np.mean(ind.dist_to_domain(sol.terminal))))
        bv2.append(float(np.mean(sol.phi_variation**2)))
    growth = penalization_growth(sweep)
    checks = [
        PropertyCheck(
            "penalization.gradient_growth_slope",
            growth.passed,
            (3.5 + 0.5) - (growth.slope if not growth.degenerate else 0.0),
            f"slope {growth.slope:.3f}",
        ),
        PropertyCheck(
            "penalization.constraint_dissipation",
            all(viols[i] >= viols[i + 1] - 1e-12 for i in range(len(viols) - 1)),
            min(viols[i] - viols[i + 1] for i in range(len(viols) - 1)),
            "violations " + ", ".join(f"{v:.2e}" for v in viols),
        ),
        PropertyCheck(
            "penalization.bounded_variation",
            max(bv2) / min(bv2) < 2.0,
            2.0 - max(bv2) / min(bv2),
            "E(sum|dphi|)^2 " + ", ".join(f"{v:.3f}" for v in bv2),
        ),
    ]
    splat = simulate_mvsvi_penalized(
        fc, ind,
        SolverConfig(1.0, 1000, 2000, seed, InitialLaw.constant(0.0),
                     penalization=1000.0, penalization_mode="splitting"),
    )
    inside = float(np.max(ind.dist_to_domain(splat.particles)))
    checks.append(PropertyCheck("penalization.splitting_feasibility", inside == 0.0, -inside))
    return checks


def suite_vi(seed: int = 5) -> List[PropertyCheck]:
    fc = ForwardCoefficients(drift_constant(0.0), diffusion_constant(1.0))
    ind = ConvexPotential.indicator_interval(0.0, math.inf)
    cfg = SolverConfig(1.0, 400, 2000, seed, InitialLaw.constant(0.5))
    oracle = simulate_reflected_projection(fc, (0.0, math.inf), cfg)
    rep = vi_residual(oracle, ind, 1.0)
    checks = [
        PropertyCheck("vi.projection_oracle_residual", rep.passed, rep.tolerance - rep.max_residual)
    ]
    split = simulate_mvsvi_penalized(
        fc, ind,
        SolverConfig(1.0, 400, 2000, seed, InitialLaw.constant(0.5),
                     penalization=1000.0, penalization_mode="splitting"),
    )
    rep2 = vi_residual(split, ind, 0.7)
    checks.append(PropertyCheck("vi.splitting_residual", rep2.passed, rep2.tolerance - rep2.max_residual))

    # ordered initial points, common noise: coupled constraint forces act
    # monotonically (solutions of the same inequality stay ordered)
    cfg_a = SolverConfig(1.0, 400, 1000, seed, InitialLaw.constant(0.2))
    cfg_b = SolverConfig(1.0, 400, 1000, seed, InitialLaw.constant(0.8))
    sol_a = simulate_reflected_projection(fc, (0.0, math.inf), cfg_a)
    sol_b = simulate_reflected_projection(fc, (0.0, math.inf), cfg_b)
    stat = monotone_coupling(sol_a, sol_b)
    worst = float(np.min(stat))
    checks.append(PropertyCheck("vi.monotone_coupling", worst >= -1e-9, worst))
    return checks


SUITES: Dict[str, Callable[[], List[PropertyCheck]]] = {
    "convex": suite_convex,
    "yw": suite_yw,
    "wasserstein": suite_wasserstein,
    "moments": suite_moments,
    "penalization": suite_penalization,
    "vi": suite_vi,
}

SUITE_NAMES = tuple(SUITES)


def run_suite(name: str) -> List[PropertyCheck]:
    if name not in SUITES:
        raise UnknownSuite(f"unknown property suite {name!r}; choose from {', '.join(SUITE_NAMES)}")
    return SUITES[name]()
