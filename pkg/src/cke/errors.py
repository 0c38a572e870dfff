"""Exception types shared across the solver."""


class CkeError(Exception):
    """Base class for all solver errors."""


class ParseError(CkeError):
    """Malformed input file (OFF mesh, background file, solution dump)."""


class TopologyError(CkeError):
    """Mesh is not a closed orientable 2-manifold."""


class DegenerateGeometry(CkeError):
    """Geometric quantity degenerate (zero-area triangle, zero weight)."""


class BadSplitting(CkeError):
    """Class splitting coefficients violate the sum/positivity constraints."""


class SolveFailure(CkeError):
    """A linear or nonlinear solve that must succeed did not."""


class GaugeViolation(CkeError):
    """Constant shift does not preserve the residual at this path parameter."""


class NonConvergence(SolveFailure):
    """Newton corrector exhausted its iteration budget."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class PositivityLost(SolveFailure):
    """Iterates left the admissible cone and backtracking could not recover."""


class LinearSolveFailure(SolveFailure):
    """Sparse factorization or triangular solve failed."""


class NotASolution(CkeError):
    """Operation requires a converged state but the residual is too large."""


class IterationFailure(CkeError):
    """Eigenvalue iteration did not converge within its budget."""


class UnsupportedBackend(CkeError):
    """Operation is not defined for this geometry backend."""


class InfeasibleTarget(CkeError):
    """Manufactured background would violate positivity."""


class ConfigError(CkeError):
    """Invalid run configuration; message carries the key path."""
