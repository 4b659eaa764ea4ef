"""Exception hierarchy shared by all subpackages."""


class DgBalanceError(Exception):
    pass


class DomainError(DgBalanceError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigurationError(DgBalanceError, ValueError):
    pass


class MeshConsistencyError(DgBalanceError):
    pass


class MeshFormatError(DgBalanceError):
    """Malformed mesh file. ``offset`` is the byte offset where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DivergenceError(DgBalanceError):
    def __init__(self, step, message="non-finite value in solution state"):
        super().__init__(f"{message} at step {step}")
        self.step = step


class SynchronizationError(DgBalanceError):
    """Halo data required by the surface kernel was not delivered."""


class AttributionError(DgBalanceError):
    pass


class PlanError(DgBalanceError):
    pass


class ExchangeError(DgBalanceError):
    pass


class CollectiveError(DgBalanceError):
    pass


class TopologyError(DgBalanceError):
    pass


class ClusterError(DgBalanceError):
    """A rank failed. ``rank`` identifies the rank where the failure originated."""

    def __init__(self, rank, cause):
        super().__init__(f"rank {rank} failed: {cause!r}")
        self.rank = rank
        self.cause = cause


class ReportError(DgBalanceError):
    pass
