"""Exception hierarchy.

The CLI maps these onto exit codes: configuration and parameter problems
exit with 2, numerical failures with 3, failed verification thresholds with 4.
"""


class MultitimeError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ParameterError(MultitimeError, ValueError):
    """Invalid model or operation parameters."""

    exit_code = 2


class DimensionError(ParameterError):
    """Operands with incompatible dimensions."""


class RegimeError(ParameterError):
    """Sweep rate lies exactly on a regime boundary."""


class ConfigError(ParameterError):
    """Malformed experiment configuration."""


class ResourceError(MultitimeError):
    """Requested Hilbert space exceeds the configured dimension limit."""

    exit_code = 2


class NumericalError(MultitimeError, ArithmeticError):
    """Numerical procedure failed (non-convergence, step underflow, lost unitarity)."""

    exit_code = 3


class DegeneracyError(NumericalError):
    """Spectral gap too small for the requested adiabatic quantity."""


class StencilError(DegeneracyError):
    """A level crossing falls inside a finite-difference stencil."""


class FamilyNotCommutingError(NumericalError):
    """Generators are not simultaneously diagonal at a point."""


class LabelingError(NumericalError):
    """Eigenstates cannot be mapped onto diabatic labels unambiguously."""


class AdiabaticityError(NumericalError):
    """Non-adiabaticity exceeds the threshold along a WKB path."""


class UnsupportedCrossingError(NumericalError):
    """A domain boundary involves more than one near-degenerate pair."""


class VerificationError(MultitimeError):
    """A verification norm exceeded its threshold in strict mode."""

    exit_code = 4
