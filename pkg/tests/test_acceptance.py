"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Criteria pair a numerical scenario with a stated tolerance and a runtime
budget.  Shared sweeps are computed once in module-scoped fixtures.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from mvsvi.backward import implicit_penalization_solve, solve_penalized_bsde
from mvsvi.cli import main
from mvsvi.coefficients import (
    BackwardCoefficients,
    ForwardCoefficients,
    diffusion_constant,
    diffusion_power,
    drift_constant,
    drift_mean_field_linear,
    driver_linear,
    driver_zero,
    terminal_identity,
    terminal_square,
)
from mvsvi.diagnostics import (
    cauchy_gap,
    monotone_coupling,
    moment_report,
    penalization_growth,
    rate_fit,
    vi_residual,
)
from mvsvi.forward import (
    InitialLaw,
    SolverConfig,
    simulate_mvsde,
    simulate_mvsvi_penalized,
    simulate_reflected_projection,
)
from mvsvi.potentials import ConvexPotential
from mvsvi.properties import run_suite

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
BM = ForwardCoefficients(drift_constant(0.0), diffusion_constant(1.0))
HALF_LINE = ConvexPotential.indicator_interval(0.0, math.inf)
HOLDER = ForwardCoefficients(drift_mean_field_linear(-0.5, 0.25), diffusion_power(1.0, 0.75))


def report_line(number, name, passed, detail, elapsed, budget):
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {number:2d} {name:<28s} {status}  {detail}  [{elapsed:.1f}s/{budget:.0f}s]")


def run_clocked(number, name, budget, fn):
    t0 = time.time()
    passed, detail = fn()
    elapsed = time.time() - t0
    ok = passed and elapsed < budget
    report_line(number, name, ok, detail, elapsed, budget)
    assert passed, detail
    assert elapsed < budget, f"runtime {elapsed:.1f}s over the {budget:.0f}s budget"


@pytest.fixture(scope="module")
def explicit_sweep():
    """Reflected-BM explicit-mode penalization sweep shared by criteria 5 and 7."""
    sweep = []
    for level in (100.0, 1000.0, 10_000.0):
        steps = int(level)
        cfg = SolverConfig(
            1.0, steps, 10_000, 7, InitialLaw.constant(0.0),
            penalization=level, penalization_mode="explicit", path_stride=steps // 10,
        )
        sweep.append((level, simulate_mvsvi_penalized(BM, HALF_LINE, cfg)))
    return sweep


def test_01_convex_analysis_suite():
    def body():
        checks = run_suite("convex")
        failed = [c.name for c in checks if not c.passed]
        return not failed, f"{len(checks)} checks" + (f", failed: {failed}" if failed else "")

    run_clocked(1, "convex analysis", 5.0, body)


def test_02_yamada_watanabe_suite():
    def body():
        checks = run_suite("yw")
        failed = [c.name for c in checks if not c.passed]
        return not failed, f"{len(checks)} checks" + (f", failed: {failed}" if failed else "")

    run_clocked(2, "smoothed |x| bounds", 2.0, body)


def test_03_wasserstein_oracle():
    def body():
        checks = run_suite("wasserstein")
        lp = next(c for c in checks if c.name == "wasserstein.lp_oracle")
        return lp.passed, f"worst LP gap {1e-10 - lp.margin:.2e}"

    run_clocked(3, "transport LP agreement", 2.0, body)


def test_04_mean_field_ou():
    def body():
        fc = ForwardCoefficients(drift_mean_field_linear(-1.0, 0.5), diffusion_constant(0.2))
        cfg = SolverConfig(1.0, 400, 10_000, 42, InitialLaw.constant(1.0), path_stride=40)
        sol = simulate_mvsde(fc, cfg)
        mean = float(sol.terminal.mean())
        se = float(sol.terminal.std(ddof=1) / math.sqrt(sol.n_particles))
        band = max(3 * se, 5 * (1.0 / 400))
        gap = abs(mean - math.exp(-0.5))
        return gap <= band, f"|mean - e^-1/2| = {gap:.5f}, band {band:.5f}"

    run_clocked(4, "mean-field OU mean", 10.0, body)


def test_05_reflected_brownian_motion(explicit_sweep):
    def body():
        target = math.sqrt(2.0 / math.pi)
        cfg = SolverConfig(1.0, 10_000, 100_000, 42, InitialLaw.constant(0.0), path_stride=500)
        oracle = simulate_reflected_projection(BM, (0.0, math.inf), cfg)
        est = float(np.mean(np.abs(oracle.terminal)))
        se = float(np.std(np.abs(oracle.terminal), ddof=1) / math.sqrt(oracle.n_particles))
        clause_a = abs(est - target) <= 3 * se

        cfg_s = SolverConfig(
            1.0, 2000, 20_000, 42, InitialLaw.constant(0.0),
            penalization=1e4, penalization_mode="splitting", path_stride=100,
        )
        split = simulate_mvsvi_penalized(BM, HALF_LINE, cfg_s)
        est_s = float(np.mean(np.abs(split.terminal)))
        clause_b = abs(est_s - est) / est <= 0.05

        viols = [
            float(np.mean(HALF_LINE.dist_to_domain(sol.terminal))) for _, sol in explicit_sweep
        ]
        clause_c = all(viols[i] >= viols[i + 1] - 1e-12 for i in range(len(viols) - 1))

        detail = (
            f"oracle gap {abs(est - target):.5f} vs 3se {3 * se:.5f}; "
            f"splitting rel gap {abs(est_s - est) / est:.3%}; violations {viols}"
        )
        return clause_a and clause_b and clause_c, detail

    run_clocked(5, "reflected Brownian motion", 60.0, body)


def test_06_moment_bound_stability():
    def body():
        ests_m = []
        for steps in (50, 100, 200, 400):
            cfg = SolverConfig(1.0, steps, 10_000, 11, InitialLaw.constant(1.0))
            ests_m.append(moment_report(simulate_mvsde(HOLDER, cfg), [4.0])[4.0].estimate)
        factor_m = max(ests_m) / min(ests_m)

        ests_n = []
        for level in (100.0, 1000.0, 10_000.0):
            steps = int(level)
            cfg = SolverConfig(
                1.0, steps, 4000, 12, InitialLaw.constant(1.0),
                penalization=level, penalization_mode="explicit", path_stride=steps // 10,
            )
            ests_n.append(
                moment_report(simulate_mvsvi_penalized(HOLDER, HALF_LINE, cfg), [4.0])[4.0].estimate
            )
        factor_n = max(ests_n) / min(ests_n)
        return (
            factor_m < 2.0 and factor_n < 2.0,
            f"refinement factor {factor_m:.3f}, penalization factor {factor_n:.3f}",
        )

    run_clocked(6, "sup-moment stability", 30.0, body)


def test_07_penalization_growth(explicit_sweep):
    def body():
        rep = penalization_growth(explicit_sweep)
        return rep.passed and rep.slope <= 4.0, f"fitted slope {rep.slope:.3f} (bound 4.0)"

    run_clocked(7, "gradient growth slope", 60.0, body)


def test_08_refinement_rate():
    def body():
        fc = ForwardCoefficients(
            drift_mean_field_linear(-1.0, 0.5), diffusion_power(0.3, 1.0, smoothing=1.0)
        )
        runs = {}
        for steps in (50, 100, 200, 400, 800):
            cfg = SolverConfig(
                1.0, steps, 4000, 13, InitialLaw.constant(1.0), crn_base_steps=800
            )
            runs[steps] = simulate_mvsde(fc, cfg)
        pairs = [
            (float(steps), cauchy_gap(runs[steps], runs[2 * steps], 2.0))
            for steps in (50, 100, 200, 400)
        ]
        fit = rate_fit(pairs)
        return fit.slope <= -0.4, f"fitted slope {fit.slope:.3f} (bound -0.4)"

    run_clocked(8, "strong refinement rate", 30.0, body)


def test_09_backward_oracles():
    def body():
        fwd = simulate_mvsde(BM, SolverConfig(1.0, 100, 20_000, 4, InitialLaw.constant(0.0)))
        zero = ConvexPotential.zero()

        mart = solve_penalized_bsde(fwd, BackwardCoefficients(driver_zero(), terminal_identity()), zero)
        se_m = float(np.std(fwd.terminal, ddof=1) / math.sqrt(fwd.n_particles))
        clause_a = abs(float(mart.initial.mean())) <= 3 * se_m

        var = solve_penalized_bsde(fwd, BackwardCoefficients(driver_zero(), terminal_square()), zero)
        se_v = float(np.std(fwd.terminal**2, ddof=1) / math.sqrt(fwd.n_particles))
        gap_v = abs(float(var.initial.mean()) - 1.0)
        clause_b = gap_v <= 3 * se_v + 2 * (1.0 / 100)

        closed = implicit_penalization_solve(HALF_LINE, 9.0, 1.0, -1.0)
        clause_c = abs(closed - (-0.1)) <= 1e-12

        detail = (
            f"martingale Y0 {float(mart.initial.mean()):+.5f} (3se {3 * se_m:.5f}); "
            f"variance gap {gap_v:.5f} (band {3 * se_v + 0.02:.5f}); "
            f"implicit solve {closed:+.12f}"
        )
        return clause_a and clause_b and clause_c, detail

    run_clocked(9, "backward oracles", 30.0, body)


def test_10_variational_inequality():
    def body():
        oracle = simulate_reflected_projection(
            BM, (0.0, math.inf), SolverConfig(1.0, 400, 2000, 5, InitialLaw.constant(0.5))
        )
        rep_f = vi_residual(oracle, HALF_LINE, 1.0)

        fwd = simulate_mvsde(BM, SolverConfig(1.0, 100, 3000, 6, InitialLaw.constant(1.0)))
        bc = BackwardCoefficients(driver_linear(const=-2.0), terminal_square())
        bwd = solve_penalized_bsde(fwd, bc, HALF_LINE, penalization=100.0, picard_sweeps=10)
        rep_b = vi_residual(bwd, HALF_LINE, 0.5)

        lo = simulate_reflected_projection(
            BM, (0.0, math.inf), SolverConfig(1.0, 400, 1000, 12, InitialLaw.constant(0.2))
        )
        hi = simulate_reflected_projection(
            BM, (0.0, math.inf), SolverConfig(1.0, 400, 1000, 12, InitialLaw.constant(0.8))
        )
        coupling = float(np.min(monotone_coupling(lo, hi)))

        detail = (
            f"forward residual {rep_f.max_residual:.2e} (tol {rep_f.tolerance:.2e}); "
            f"backward residual {rep_b.max_residual:.2e} (tol {rep_b.tolerance:.2e}); "
            f"coupling min {coupling:.2e}"
        )
        return rep_f.passed and rep_b.passed and coupling >= -1e-9, detail

    run_clocked(10, "variational inequality", 10.0, body)


def test_11_reproducibility(tmp_path):
    def body():
        cfg = SCENARIOS / "mean_field_ou.toml"
        assert main(["run-forward", "--config", str(cfg), "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
        assert main(["run-forward", "--config", str(cfg), "--out", str(tmp_path / "b"), "--threads", "4"]) == 0
        same = all(
            (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("paths.csv", "measures.csv")
        )
        return same, "CSV bodies byte-identical across --threads 1/4"

    run_clocked(11, "seeded reproducibility", 10.0, body)
