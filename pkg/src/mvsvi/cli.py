"""Config-driven batch front end.

Verbs: run-forward, run-fbsvs, check-properties, rate-study.  Artifacts
are deterministic per seed: CSV bodies carry full round-trip decimal
formatting and no timestamps, so re-running a scenario byte-identically
reproduces them regardless of --threads (parallelism, where present, is
inside the solvers and never changes results).

Exit codes: 0 success, 2 config error, 3 numeric/solver error,
4 property failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .backward import solve_penalized_bsde
from .config import Scenario, load_scenario
from .diagnostics import moment_report, rate_fit, vi_residual
from .errors import ConfigError, InsufficientSweep, PropertyFailure, SolverError
from .forward import (
    ForwardSolution,
    simulate_mvsde,
    simulate_mvsvi_penalized,
    simulate_reflected_projection,
)
from .measures import wasserstein
from .properties import SUITE_NAMES, run_suite

__all__ = ["main", "run_forward", "run_fbsvs", "run_rate_study", "run_check_properties"]


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def read_csv(path) -> dict:
    """Load an emitted CSV back into named float columns."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = {h: [] for h in header}
        for row in reader:
            for h, v in zip(header, row):
                cols[h].append(float(v))
    return {h: np.asarray(v) for h, v in cols.items()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    if isinstance(obj, (np.floating, np.integer)):
        return _jsonable(float(obj))
    return obj


def _write_report(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _simulate(scenario: Scenario) -> ForwardSolution:
    if scenario.scheme == "euler":
        return simulate_mvsde(scenario.forward, scenario.solver)
    if scenario.scheme == "projection":
        return simulate_reflected_projection(
            scenario.forward, scenario.potential.domain, scenario.solver
        )
    return simulate_mvsvi_penalized(scenario.forward, scenario.potential, scenario.solver)


def _forward_artifacts(scenario: Scenario, sol: ForwardSolution, out: Path) -> dict:
    k_stored = sol.phi.shape[1]
    stride = scenario.solver.path_stride

    def path_rows():
        for i in range(sol.n_particles):
            for j in range(k_stored + 1):
                dphi = sol.phi[i, j] if j < k_stored else 0.0
                yield (i, j * stride, _fmt(sol.times[j]), _fmt(sol.particles[i, j]), _fmt(dphi))

    _write_csv(out / "paths.csv", ["particle", "step", "time", "x", "dphi"], path_rows())

    mu0 = sol.measure_at(0)

    def measure_rows():
        for j in range(k_stored + 1):
            mu = sol.measure_at(j)
            yield (
                j * stride,
                _fmt(sol.times[j]),
                _fmt(mu.mean),
                _fmt(mu.moment(1.0)),
                _fmt(mu.moment(2.0)),
                _fmt(wasserstein(1.0, mu, mu0)),
            )

    _write_csv(
        out / "measures.csv",
        ["step", "time", "mean", "abs_moment_1", "abs_moment_2", "w1_to_initial"],
        measure_rows(),
    )

    report = {
        "name": scenario.name,
        "seed": scenario.seed,
        "version": __version__,
        "scheme": scenario.scheme,
        "config": scenario.echo,
        "moment_report": moment_report(sol, scenario.moments).to_dict(),
    }
    if scenario.vi_test_path is not None and scenario.potential is not None:
        rep = vi_residual(sol, scenario.potential, scenario.vi_test_path)
        report["vi_residual"] = {
            "test_path": scenario.vi_test_path,
            "max_residual": rep.max_residual,
            "tolerance": rep.tolerance,
            "passed": rep.passed,
        }
    return report


def run_forward(scenario: Scenario) -> dict:
    out = scenario.output_dir
    out.mkdir(parents=True, exist_ok=True)
    sol = _simulate(scenario)
    report = _forward_artifacts(scenario, sol, out)
    _write_report(out / "report.json", report)
    return report


def run_fbsvs(scenario: Scenario) -> dict:
    if scenario.backward is None:
        raise ConfigError("run-fbsvs needs a [backward] table in the scenario")
    out = scenario.output_dir
    out.mkdir(parents=True, exist_ok=True)
    sol = _simulate(scenario)
    spec = scenario.backward
    bwd = solve_penalized_bsde(
        sol,
        spec.coefficients,
        spec.potential2,
        penalization=spec.penalization,
        trunc_radius=spec.trunc_radius,
        reg=spec.regression,
        mode=spec.mode,
        picard_sweeps=spec.picard_sweeps,
        picard_tol=spec.picard_tol,
    )
    report = _forward_artifacts(scenario, sol, out)

    m = bwd.z.shape[1]

    def backward_rows():
        for i in range(bwd.n_particles):
            for j in range(m + 1):
                z = bwd.z[i, j] if j < m else 0.0
                dphi2 = bwd.phi2[i, j] if j < m else 0.0
                yield (i, j, _fmt(bwd.y[i, j]), _fmt(z), _fmt(dphi2))

    _write_csv(out / "backward.csv", ["particle", "step", "y", "z", "dphi2"], backward_rows())

    y0 = bwd.initial
    # dispersion-based error collapses when X_0 is deterministic; the
    # terminal-based one keeps the Monte Carlo scale visible either way
    report["backward"] = {
        "y0_mean": float(np.mean(y0)),
        "y0_std_error": float(np.std(y0, ddof=1) / math.sqrt(y0.size)) if y0.size > 1 else 0.0,
        "terminal_std_error": (
            float(np.std(bwd.terminal, ddof=1) / math.sqrt(y0.size)) if y0.size > 1 else 0.0
        ),
        "picard_sweeps_run": bwd.sweeps_run,
        "picard_gap": bwd.picard_gap,
        "mode": bwd.mode,
    }
    _write_report(out / "report.json", report)
    return report


def _gap_with_se(a: ForwardSolution, b: ForwardSolution, p: float) -> Tuple[float, float]:
    factor = b.config.steps // a.config.steps
    per = np.abs(a.particles - b.particles[:, ::factor]).max(axis=1) ** p
    mean = float(per.mean())
    gap = mean ** (1.0 / p)
    se_mean = float(per.std(ddof=1) / math.sqrt(per.size))
    se = se_mean / (p * gap ** (p - 1.0)) if gap > 0 else 0.0
    return gap, se


def run_rate_study(scenario: Scenario) -> dict:
    spec = scenario.rate_study
    if spec is None:
        raise ConfigError("rate-study needs a [diagnostics.rate_study] table")
    out = scenario.output_dir
    out.mkdir(parents=True, exist_ok=True)
    rows: List[tuple] = []
    pairs: List[Tuple[float, float]] = []

    if spec.kind == "refinement":
        if len(spec.steps) < 3:
            raise InsufficientSweep("refinement study needs >= 3 step counts")
        base = 2 * max(spec.steps)
        needed = sorted(set(list(spec.steps) + [2 * s for s in spec.steps]))
        for steps in needed:
            if base % steps != 0:
                raise ConfigError(
                    f"step count {steps} does not divide the refinement base {base}"
                )
        runs = {}
        for steps in needed:
            cfg = replace(scenario.solver, steps=steps, crn_base_steps=base, path_stride=1)
            runs[steps] = _simulate(replace(scenario, solver=cfg))
        for steps in sorted(spec.steps):
            gap, se = _gap_with_se(runs[steps], runs[2 * steps], spec.order)
            rows.append((steps, _fmt(gap), _fmt(se)))
            pairs.append((float(steps), gap))
        axis = "steps"
    else:
        if len(spec.levels) < 3:
            raise InsufficientSweep("penalization study needs >= 3 levels")
        if scenario.potential is None:
            raise ConfigError("penalization study needs a [potential] table")
        for level in sorted(spec.levels):
            steps = max(scenario.solver.steps, int(math.ceil(level * scenario.solver.horizon)))
            cfg = replace(
                scenario.solver, steps=steps, penalization=level, path_stride=steps
            )
            sol = simulate_mvsvi_penalized(scenario.forward, scenario.potential, cfg)
            viol = scenario.potential.dist_to_domain(sol.terminal)
            gap = float(np.mean(viol))
            se = float(np.std(viol, ddof=1) / math.sqrt(viol.size))
            rows.append((level, _fmt(gap), _fmt(se)))
            pairs.append((float(level), gap))
        axis = "level"

    _write_csv(out / "rates.csv", [axis, "gap", "std_error"], rows)
    fit = rate_fit(pairs)
    report = {
        "name": scenario.name,
        "seed": scenario.seed,
        "version": __version__,
        "kind": spec.kind,
        "order": spec.order,
        "slope": fit.slope,
        "intercept": fit.intercept,
    }
    _write_report(out / "rate_report.json", report)
    return report


def run_check_properties(suite: str, out_dir: Optional[Path] = None) -> dict:
    names = SUITE_NAMES if suite == "all" else (suite,)
    results = {}
    for name in names:
        results[name] = [c.to_dict() for c in run_suite(name)]
    payload = {"version": __version__, "suites": results}
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_report(out_dir / "properties.json", payload)
    failed = [c["name"] for checks in results.values() for c in checks if not c["passed"]]
    if failed:
        raise PropertyFailure("failed checks: " + ", ".join(failed))
    return payload


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvsvi", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_scenario_args(sp):
        sp.add_argument("--config", required=True, help="scenario TOML file")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--out", default=None, help="override the output directory")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker hint; never affects results")

    add_scenario_args(sub.add_parser("run-forward", help="simulate the forward system"))
    add_scenario_args(sub.add_parser("run-fbsvs", help="simulate the coupled forward-backward system"))
    add_scenario_args(sub.add_parser("rate-study", help="sweep resolutions or penalization levels"))

    cp = sub.add_parser("check-properties", help="run property suites")
    cp.add_argument("--suite", default="all", help=f"one of {', '.join(SUITE_NAMES)} or 'all'")
    cp.add_argument("--out", default=None, help="directory for properties.json")
    cp.add_argument("--threads", type=int, default=1, help="worker hint; never affects results")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verb == "check-properties":
            run_check_properties(args.suite, Path(args.out) if args.out else None)
            return 0
        scenario = load_scenario(args.config, seed_override=args.seed, out_override=args.out)
        if args.verb == "run-forward":
            run_forward(scenario)
        elif args.verb == "run-fbsvs":
            run_fbsvs(scenario)
        else:
            run_rate_study(scenario)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except PropertyFailure as exc:
        print(f"property failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
