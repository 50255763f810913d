"""Particle solvers and property checks for one-dimensional McKean-Vlasov
SDEs, stochastic variational inequalities, and coupled backward systems."""

__version__ = "0.1.0"

from .backward import (
    BackwardSolution,
    RegressionConfig,
    implicit_penalization_solve,
    solve_penalized_bsde,
)
from .coefficients import (
    AssumptionProfile,
    BackwardCoefficients,
    ForwardCoefficients,
    GridSpec,
    validate_assumptions,
)
from .diagnostics import (
    YamadaWatanabeFn,
    cauchy_gap,
    moment_report,
    monotone_coupling,
    penalization_growth,
    rate_fit,
    vi_residual,
)
from .forward import (
    ForwardSolution,
    InitialLaw,
    SolverConfig,
    simulate_mvsde,
    simulate_mvsvi_penalized,
    simulate_reflected_projection,
)
from .measures import EmpiricalMeasure, MeasureStats, wasserstein
from .potentials import ConvexPotential, YosidaView
