"""Exception types raised across the package."""


class BoussivemError(Exception):
    """Base class for all package errors."""


class MeshError(BoussivemError):
    pass


class NonManifoldEdge(MeshError):
    """An edge is used by more than two cells or twice with the same orientation."""


class NegativeArea(MeshError):
    """A cell is not a positively oriented (counter-clockwise) simple polygon."""


class DanglingVertex(MeshError):
    """A vertex is referenced by no cell."""


class UnsupportedDomain(MeshError):
    """Mesh family / domain descriptor combination not implemented."""


class TriangulationFailure(BoussivemError):
    """Ear clipping could not triangulate a polygon."""


class SingularGram(BoussivemError):
    """A Gram matrix was numerically singular."""


class RankDeficiency(BoussivemError):
    """A local projector system lost rank (degenerate element geometry)."""


class CoefficientOutOfBounds(BoussivemError):
    """A temperature-dependent coefficient left its admissible positive range."""


class SolverError(BoussivemError):
    pass


class NoConvergence(SolverError):
    """Nonlinear iteration exhausted its budget without meeting the tolerance."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class LinearSolveFailure(SolverError):
    """Sparse direct solve produced an unacceptable residual."""


class SingularMatrix(SolverError):
    """Sparse factorization failed (structurally or numerically singular)."""


class SingularJacobian(SolverError):
    """Newton Jacobian could not be factorized."""


class DuplicateMeshSize(BoussivemError):
    """Two rate-table rows share the same mesh size h."""


class IoFailure(BoussivemError):
    """Field export could not be written."""


class ConfigError(BoussivemError):
    """Experiment configuration failed validation."""
