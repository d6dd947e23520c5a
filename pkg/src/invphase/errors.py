"""Exception types raised across the package.

Every error carries a human-readable message; callers that need to map
failures to CLI exit codes catch the three broad buckets ``ConfigError``,
``ComputeError`` and ``IoError`` (everything numeric derives from
``ComputeError``).
"""


class InvphaseError(Exception):
    """Base class for all package errors."""


class ComputeError(InvphaseError):
    """A numerical pipeline step failed or produced out-of-contract output."""


class DimensionMismatch(ComputeError):
    """Operands do not share the required dimension."""


class NonHermitianInput(ComputeError):
    """A matrix flagged/required Hermitian violates the hermiticity bound."""


class ConvergenceFailure(ComputeError):
    """An iterative eigensolver failed to converge."""


class ToleranceNotMet(ComputeError):
    """Step-doubling error estimate exceeded the tolerance after maximal refinement."""


class SymmetryViolation(ComputeError):
    """A would-be symmetry generator fails to commute with the invariant."""


class GridTooCoarse(ComputeError):
    """Too few grid points (or too coarse a grid) for the requested stencil."""


class DegeneracyCrossing(ComputeError):
    """The eigenvalue cluster structure of an invariant path is not constant."""


class OverlapTooSmall(ComputeError):
    """Cross-step eigenframe overlap below the matching threshold."""


class DegenerateEigenvalue(ComputeError):
    """An Abelian phase was requested for a degenerate (d_n > 1) eigenvalue."""


class IncompleteRecord(ComputeError):
    """A phase-record field required by the operation has not been filled."""


class NotCyclic(ComputeError):
    """A state failed to return to its initial ray at the declared period."""


class ConstraintViolation(InvphaseError):
    """Oscillator parameters violate m > M and/or M*Omega^2 > m*omega^2."""


class DegenerateParameters(InvphaseError):
    """Closed forms requested on the degenerate parameter lines mu=1 / nu=1."""


class TruncationTooSmall(ComputeError):
    """Fock truncation too small for the requested state (fidelity loss)."""


class DomainError(ComputeError):
    """A quantity left its validity domain (e.g. rho^2 <= 0 in the Ermakov check)."""


class ConfigError(InvphaseError):
    """Scenario configuration failed schema validation."""


class IoError(InvphaseError):
    """Reading/writing an artifact (CSV, report) failed."""
