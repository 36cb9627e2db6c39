"""Exception hierarchy for the ppbr package."""


class PPBRError(ValueError):
    """Base class for all errors raised by ppbr."""


class DimensionError(PPBRError):
    """Matrix or vector dimensions do not agree."""


class DegenerateIndexError(PPBRError):
    """All projection indices are equal, so no spline basis can be built."""


class SingularDesignError(PPBRError):
    """The spline design matrix is rank deficient beyond jitter repair."""


class ChainDivergedError(PPBRError):
    """The sampler produced a non-finite log-likelihood."""
