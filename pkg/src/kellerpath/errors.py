"""Exception hierarchy.

Every solver failure derives from :class:`SolverError`, which carries a
``details`` dict that the CLI serializes into its JSON error report.
"""

from __future__ import annotations


class SolverError(RuntimeError):
    """Base class for numerical failures."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self), "details": self.details}


class BlowUp(SolverError):
    """Trajectory exceeded the magnitude cap."""


class StepUnderflow(SolverError):
    """Adaptive step fell below the machine floor."""


class DegenerateInterval(SolverError):
    """Interval too short to carry the requested computation."""


class NormalizationFailure(SolverError):
    """Wronskian of the homogeneous pair vanished."""


class OutOfDomain(SolverError):
    """Evaluation point outside the stored interval."""


class NoInteriorZero(SolverError):
    """Expected sign change was not found."""


class SingularSystem(SolverError):
    """Linear system too ill conditioned."""


class BracketFailure(SolverError):
    """Root bracket could not be established."""


class BelowThreshold(SolverError):
    """Parameter below the existence threshold."""


class ShootingCollapse(SolverError):
    """Shooting bracket shrank without producing a valid profile."""


class ZeroFunction(SolverError):
    """Operation undefined for the zero function."""


class SubSolveFailure(SolverError):
    """A monotone sub-solve inside a gluing map failed."""


class NoBracket(SolverError):
    """Matching function has equal signs at the bracket ends."""


class NewtonStall(SolverError):
    """Newton iteration stopped decreasing the residual."""


class InfeasibleOrder(SolverError):
    """Iterates left the ordered region."""


class CorrectorDivergence(SolverError):
    """Continuation corrector failed at the minimum step."""


class WindowTooWide(SolverError):
    """Requested rescaled window exceeds the interval."""


class EigSolverFailure(SolverError):
    """Eigenvalue iteration did not converge."""


class SingularIntegrand(SolverError):
    """Integrand not integrable on the requested interval."""


class NonSimpleZero(SolverError):
    """A zero with vanishing derivative was found."""


class TrivialProfile(SolverError):
    """Profile is (numerically) the constant solution."""


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""
