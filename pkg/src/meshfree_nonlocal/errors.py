"""Exception types raised by the solver pipeline."""


class MeshfreeError(Exception):
    """Base class for numerical failures (CLI exit code 3)."""


class NeighborhoodError(MeshfreeError, ValueError):
    """An interior point has no neighbors within the horizon."""


class QuadratureError(MeshfreeError):
    """Weight generation failed for a center point."""

    def __init__(self, message, center=None):
        super().__init__(message)
        self.center = center


class SingularSystemError(MeshfreeError):
    """The assembled linear system cannot be factorized."""


class SolveError(MeshfreeError):
    """A linear solve returned a solution that fails the residual gate."""
