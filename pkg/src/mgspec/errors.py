"""Exception hierarchy shared by all mgspec modules."""


class MgspecError(Exception):
    """Base class for all errors raised by this package."""


# --- graph construction and validation ---

class NonPositiveLength(MgspecError):
    """An edge length is zero, negative, or non-finite."""


class LoopEdge(MgspecError):
    """An edge connects a vertex to itself."""


class BadVertexIndex(MgspecError):
    """An edge endpoint is outside [0, vertex_count)."""


class BadParameter(MgspecError):
    """A generator or bound was called with inadmissible parameters."""


class SplitOutOfRange(MgspecError):
    """Split position is not strictly inside the edge."""


# --- solvers ---

class NotConnected(MgspecError):
    """Operation requires a connected graph."""


class NonPositiveKappa(MgspecError):
    """The secular matrix is only defined for kappa > 0."""


class CountMismatch(MgspecError):
    """Secular eigenvalue count disagrees with the FEM inertia count."""


class ConvergenceFailure(MgspecError):
    """An iterative solver failed to reach its target tolerance."""


class FactorizationBreakdown(MgspecError):
    """Symmetric indefinite factorization hit a singular pivot repeatedly."""


class SolverFailure(MgspecError):
    """A spectral evaluation produced an unusable or inconsistent result."""


# --- surgery ---

class NotPendant(MgspecError):
    """The edge has no endpoint of degree one."""


class WouldBeEmpty(MgspecError):
    """Removing this edge would leave a graph with no edges."""


class DeltaOutOfRange(MgspecError):
    """Shortening amount must lie strictly inside (0, edge length)."""


class NotAThreeStar(MgspecError):
    """Operation is defined for 3-stars only."""


class NotATree(MgspecError):
    """Operation requires a connected tree."""


class TooFewEdges(MgspecError):
    """Operation requires at least three edges."""


# --- isoperimetric checks ---

class HypothesisViolated(MgspecError):
    """Input is outside the class the bound applies to (not a tree,
    fewer than three edges, or has a vertex of degree two)."""
