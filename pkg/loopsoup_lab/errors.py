"""Exception hierarchy shared by all lab modules."""


class LoopSoupError(Exception):
    """Base class for every failure raised by the lab."""


class ParameterError(LoopSoupError, ValueError):
    pass


class DomainMembershipError(LoopSoupError, ValueError):
    pass


class ResolutionError(LoopSoupError, ValueError):
    pass


class ProximityError(LoopSoupError, ValueError):
    pass


class ConfigurationError(LoopSoupError, ValueError):
    pass


class CutoffMismatchError(LoopSoupError, ValueError):
    pass


class DiagonalError(LoopSoupError, ValueError):
    pass


class GridSpacingError(LoopSoupError, ValueError):
    pass


class RegimeError(LoopSoupError, ValueError):
    pass


class MissingEntryError(LoopSoupError, KeyError):
    pass


class RebuildRequiredError(LoopSoupError):
    """Persisted AlphaTable metadata does not match the requested build."""


class TableQualityError(LoopSoupError):
    """Covariance assembled from a table is not PSD beyond noise tolerance."""


class FactorizationError(LoopSoupError):
    pass
