"""Exception types shared across the package."""


class NetAllocError(Exception):
    """Base class for all library errors."""


class InvalidEdge(NetAllocError):
    """Edge list contains a self-loop, duplicate, or out-of-range index."""


class DisconnectedGraph(NetAllocError):
    """The edge set does not connect all nodes."""


class DimensionMismatch(NetAllocError):
    """An array argument has the wrong shape for the problem at hand."""


class WeightPropertyError(NetAllocError):
    """A candidate weight matrix fails one of the required properties.

    Carries the offending :class:`~netalloc.graphs.ValidationReport` in
    ``args[1]`` when available.
    """


class OutsideBall(NetAllocError):
    """A point lies outside (or on the boundary of) a barrier ball."""


class InfeasibleStart(NetAllocError):
    """The initial primal iterate violates the resource constraint."""


class BarrierBreakdown(NetAllocError):
    """Barrier backtracking hit its floor without finding an interior step."""


class MissingMatrix(NetAllocError):
    """The non-symmetric certification path requires the weight matrix."""


class NoFeasibleBeta(NetAllocError):
    """No positive step scale satisfies the non-symmetric spectral condition."""


class MissingMessage(NetAllocError):
    """A node did not receive a required neighbor message (protocol bug)."""


class ScheduleMismatch(NetAllocError):
    """Two traces do not share the same snapshot schedule."""


class NoConvergence(NetAllocError):
    """An iterative reference solve stopped before reaching its tolerance.

    ``args[1]`` holds the best residual seen, when available.
    """


class TooLarge(NetAllocError):
    """Instance exceeds the size limit of a desk-scale reference method."""
