"""Scenario files.

One TOML file per scenario, tables ``forward``, ``potential``, ``solver``,
``backward``, ``diagnostics``, ``output``.  Unknown keys are hard errors
(silent typos are the dominant failure mode in scenario files) and every
error message names the offending key.  A seed is mandatory: no run draws
entropy implicitly.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backward import RegressionConfig
from .coefficients import (
    BackwardCoefficients,
    ForwardCoefficients,
    diffusion_constant,
    diffusion_power,
    drift_constant,
    drift_mean_field_linear,
    driver_capped_power,
    driver_linear,
    driver_zero,
    terminal_identity,
    terminal_linear,
    terminal_square,
)
from .errors import ConfigError
from .forward import InitialLaw, SolverConfig
from .potentials import ConvexPotential

__all__ = ["Scenario", "BackwardSpec", "load_scenario", "parse_scenario"]


def _check_keys(table: dict, allowed: set, where: str):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key '{where}.{key}'" if where else f"unknown key '{key}'")


def _need(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing required key '{where}.{key}'" if where else f"missing required key '{key}'")
    return table[key]


def _potential_from(table: dict, where: str) -> ConvexPotential:
    kind = _need(table, "kind", where)
    if kind == "indicator_interval":
        _check_keys(table, {"kind", "lo", "hi"}, where)
        return ConvexPotential.indicator_interval(
            float(table.get("lo", -math.inf)), float(table.get("hi", math.inf))
        )
    if kind == "abs_power":
        _check_keys(table, {"kind", "p", "scale"}, where)
        return ConvexPotential.abs_power(float(_need(table, "p", where)), float(_need(table, "scale", where)))
    if kind == "max_affine":
        _check_keys(table, {"kind", "pieces"}, where)
        pieces = _need(table, "pieces", where)
        return ConvexPotential.max_affine([(float(a), float(b)) for a, b in pieces])
    raise ConfigError(f"unknown potential kind '{kind}' at '{where}.kind'")


def _drift_from(table: dict, where: str):
    kind = _need(table, "kind", where)
    if kind == "constant":
        _check_keys(table, {"kind", "value"}, where)
        return drift_constant(float(table.get("value", 0.0)))
    if kind == "mean_field_linear":
        _check_keys(table, {"kind", "a", "bbar"}, where)
        return drift_mean_field_linear(float(table.get("a", 0.0)), float(table.get("bbar", 0.0)))
    raise ConfigError(f"unknown drift kind '{kind}' at '{where}.kind'")


def _diffusion_from(table: dict, where: str):
    kind = _need(table, "kind", where)
    if kind == "constant":
        _check_keys(table, {"kind", "value"}, where)
        return diffusion_constant(float(table.get("value", 0.0)))
    if kind == "power":
        _check_keys(table, {"kind", "c", "theta", "smoothing"}, where)
        return diffusion_power(
            float(_need(table, "c", where)),
            float(_need(table, "theta", where)),
            float(table.get("smoothing", 0.0)),
        )
    raise ConfigError(f"unknown diffusion kind '{kind}' at '{where}.kind'")


def _driver_from(table: dict, where: str):
    kind = _need(table, "kind", where)
    if kind == "zero":
        _check_keys(table, {"kind"}, where)
        return driver_zero()
    if kind == "linear":
        _check_keys(table, {"kind", "coef_y", "coef_z", "const"}, where)
        return driver_linear(
            float(table.get("coef_y", 0.0)),
            float(table.get("coef_z", 0.0)),
            float(table.get("const", 0.0)),
        )
    if kind == "capped_power":
        _check_keys(table, {"kind", "coef", "k", "const"}, where)
        return driver_capped_power(
            float(_need(table, "coef", where)),
            float(_need(table, "k", where)),
            float(table.get("const", 0.0)),
        )
    raise ConfigError(f"unknown driver kind '{kind}' at '{where}.kind'")


def _terminal_from(table: dict, where: str):
    kind = _need(table, "kind", where)
    if kind == "identity":
        _check_keys(table, {"kind"}, where)
        return terminal_identity()
    if kind == "square":
        _check_keys(table, {"kind"}, where)
        return terminal_square()
    if kind == "linear":
        _check_keys(table, {"kind", "a", "const"}, where)
        return terminal_linear(float(table.get("a", 1.0)), float(table.get("const", 0.0)))
    raise ConfigError(f"unknown terminal kind '{kind}' at '{where}.kind'")


def _initial_from(table: dict, where: str) -> InitialLaw:
    kind = _need(table, "kind", where)
    if kind == "constant":
        _check_keys(table, {"kind", "value"}, where)
        return InitialLaw.constant(float(_need(table, "value", where)))
    if kind == "uniform":
        _check_keys(table, {"kind", "lo", "hi"}, where)
        return InitialLaw.uniform(float(_need(table, "lo", where)), float(_need(table, "hi", where)))
    if kind == "gaussian":
        _check_keys(table, {"kind", "mean", "std"}, where)
        return InitialLaw.gaussian(float(_need(table, "mean", where)), float(_need(table, "std", where)))
    if kind == "samples":
        _check_keys(table, {"kind", "values"}, where)
        return InitialLaw.samples(_need(table, "values", where))
    raise ConfigError(f"unknown initial-law kind '{kind}' at '{where}.kind'")


@dataclass(frozen=True)
class BackwardSpec:
    coefficients: BackwardCoefficients
    potential2: ConvexPotential
    penalization: float
    mode: str
    regression: RegressionConfig
    picard_sweeps: int
    picard_tol: float
    trunc_radius: float


@dataclass(frozen=True)
class RateStudySpec:
    kind: str
    steps: Tuple[int, ...] = ()
    levels: Tuple[float, ...] = ()
    order: float = 2.0


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    forward: ForwardCoefficients
    solver: SolverConfig
    scheme: str
    potential: Optional[ConvexPotential]
    backward: Optional[BackwardSpec]
    moments: Tuple[float, ...]
    vi_test_path: Optional[float]
    rate_study: Optional[RateStudySpec]
    output_dir: Path
    echo: Dict[str, Any]


_TOP_KEYS = {"name", "seed", "forward", "potential", "solver", "backward", "diagnostics", "output"}
_SOLVER_KEYS = {
    "horizon", "steps", "particles", "scheme", "mode", "penalization",
    "path_stride", "crn_base_steps", "initial",
}
_BACKWARD_KEYS = {
    "driver", "terminal", "potential2", "penalization", "mode", "degree",
    "knots", "ridge", "picard_sweeps", "picard_tol", "truncation", "l", "k",
}
_DIAG_KEYS = {"moments", "vi_test_path", "rate_study"}


def parse_scenario(raw: dict, name: str = "scenario") -> Scenario:
    _check_keys(raw, _TOP_KEYS, "")
    if "seed" not in raw:
        raise ConfigError("missing required key 'seed'")
    seed = int(raw["seed"])

    fwd_table = _need(raw, "forward", "")
    _check_keys(fwd_table, {"drift", "diffusion"}, "forward")
    forward = ForwardCoefficients(
        _drift_from(_need(fwd_table, "drift", "forward"), "forward.drift"),
        _diffusion_from(_need(fwd_table, "diffusion", "forward"), "forward.diffusion"),
    )

    potential = None
    if "potential" in raw:
        potential = _potential_from(raw["potential"], "potential")

    sol_table = _need(raw, "solver", "")
    _check_keys(sol_table, _SOLVER_KEYS, "solver")
    scheme = sol_table.get("scheme", "euler")
    if scheme not in ("euler", "projection", "penalized"):
        raise ConfigError(f"unknown scheme '{scheme}' at 'solver.scheme'")
    if scheme in ("projection", "penalized") and potential is None:
        raise ConfigError(f"scheme '{scheme}' needs a [potential] table")
    if scheme == "projection" and potential is not None and potential.kind != "indicator":
        raise ConfigError("scheme 'projection' needs an indicator_interval potential")
    mode = sol_table.get("mode", "splitting")
    penalization = sol_table.get("penalization")
    solver = SolverConfig(
        horizon=float(_need(sol_table, "horizon", "solver")),
        steps=int(_need(sol_table, "steps", "solver")),
        particles=int(_need(sol_table, "particles", "solver")),
        seed=seed,
        initial=_initial_from(_need(sol_table, "initial", "solver"), "solver.initial"),
        penalization=float(penalization) if penalization is not None else None,
        penalization_mode=mode,
        path_stride=int(sol_table.get("path_stride", 1)),
        crn_base_steps=(
            int(sol_table["crn_base_steps"]) if "crn_base_steps" in sol_table else None
        ),
    )
    if scheme == "penalized" and mode == "explicit" and solver.penalization is None:
        raise ConfigError("explicit penalized scheme needs 'solver.penalization'")

    backward = None
    if "backward" in raw:
        bt = raw["backward"]
        _check_keys(bt, _BACKWARD_KEYS, "backward")
        bc = BackwardCoefficients(
            _driver_from(_need(bt, "driver", "backward"), "backward.driver"),
            _terminal_from(_need(bt, "terminal", "backward"), "backward.terminal"),
            growth_l=float(bt.get("l", 2.0)),
            growth_k=float(bt.get("k", 0.5)),
        )
        psi2 = (
            _potential_from(bt["potential2"], "backward.potential2")
            if "potential2" in bt
            else ConvexPotential.zero()
        )
        backward = BackwardSpec(
            coefficients=bc,
            potential2=psi2,
            penalization=float(bt.get("penalization", 1.0)),
            mode=bt.get("mode", "splitting"),
            regression=RegressionConfig(
                degree=int(bt.get("degree", 3)),
                knots=tuple(float(v) for v in bt.get("knots", ())),
                ridge=float(bt.get("ridge", 1e-10)),
            ),
            picard_sweeps=int(bt.get("picard_sweeps", 3)),
            picard_tol=float(bt.get("picard_tol", 1e-8)),
            trunc_radius=float(bt.get("truncation", math.inf)),
        )

    moments: Tuple[float, ...] = (1.0, 2.0)
    vi_test_path = None
    rate_study = None
    if "diagnostics" in raw:
        dt = raw["diagnostics"]
        _check_keys(dt, _DIAG_KEYS, "diagnostics")
        if "moments" in dt:
            moments = tuple(float(p) for p in dt["moments"])
        if "vi_test_path" in dt:
            vi_test_path = float(dt["vi_test_path"])
        if "rate_study" in dt:
            rs = dt["rate_study"]
            _check_keys(rs, {"kind", "steps", "levels", "order"}, "diagnostics.rate_study")
            kind = _need(rs, "kind", "diagnostics.rate_study")
            if kind not in ("refinement", "penalization"):
                raise ConfigError(
                    f"unknown rate-study kind '{kind}' at 'diagnostics.rate_study.kind'"
                )
            rate_study = RateStudySpec(
                kind=kind,
                steps=tuple(int(v) for v in rs.get("steps", ())),
                levels=tuple(float(v) for v in rs.get("levels", ())),
                order=float(rs.get("order", 2.0)),
            )

    out_dir = Path("out") / name
    if "output" in raw:
        ot = raw["output"]
        _check_keys(ot, {"dir"}, "output")
        out_dir = Path(_need(ot, "dir", "output"))

    return Scenario(
        name=str(raw.get("name", name)),
        seed=seed,
        forward=forward,
        solver=solver,
        scheme=scheme,
        potential=potential,
        backward=backward,
        moments=moments,
        vi_test_path=vi_test_path,
        rate_study=rate_study,
        output_dir=out_dir,
        echo=raw,
    )


def load_scenario(path, seed_override: Optional[int] = None, out_override=None) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}")
    if seed_override is not None:
        raw["seed"] = int(seed_override)
    if out_override is not None:
        raw.setdefault("output", {})["dir"] = str(out_override)
    return parse_scenario(raw, name=path.stem)
