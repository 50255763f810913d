"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2,
numeric/solver failures exit 3, property-check failures exit 4.
"""


class MVSVIError(Exception):
    """Base class for all package errors."""


class ConfigError(MVSVIError):
    """Scenario file invalid; the message names the offending key."""


class UnknownSuite(ConfigError):
    """check-properties was asked for a suite that does not exist."""


class SolverError(MVSVIError):
    """Base class for numeric and solver failures (exit code 3)."""


class NumericNonconvergence(SolverError):
    """An internal 1-D solve failed to converge within its budget."""


class ConstructionError(SolverError):
    """A derived object violates its build-time invariant."""


class EmptySample(SolverError):
    pass


class NonFiniteSample(SolverError):
    pass


class InvalidOrder(SolverError):
    pass


class NonFiniteCoefficient(SolverError):
    pass


class NonFiniteState(SolverError):
    """State blew past the 1e12 guard; message carries the step index."""


class StiffnessViolation(SolverError):
    """Explicit penalization requested with n * dt > 1."""


class GridMismatch(SolverError):
    pass


class SeedMismatch(SolverError):
    pass


class InsufficientSweep(SolverError):
    pass


class TestPathOutsideDomain(SolverError):
    __test__ = False  # keep pytest from collecting the Test* name



class RegressionSingular(SolverError):
    pass


class PicardNonconvergence(SolverError):
    """Picard sweep budget exhausted with the gap still above tolerance."""


class PropertyFailure(MVSVIError):
    """At least one property check failed (exit code 4)."""
