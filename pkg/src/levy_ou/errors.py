class LevyOUError(Exception):
    """Base class for domain errors raised by this package."""


class InvalidLevyMeasure(LevyOUError, ValueError):
    """A jump measure failed the Lévy-measure integrability checks."""


class NotExponentiallyStable(LevyOUError):
    """The fitted decay rate of the evolution family is not positive."""


class ConstantsUnavailable(LevyOUError):
    """Gradient/jump estimate constants cannot be estimated for this noise."""


class InfiniteRho(LevyOUError):
    """The intrinsic distance is infinite, so the Harnack bound is vacuous."""
