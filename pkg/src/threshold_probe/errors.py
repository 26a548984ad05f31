"""Exception types raised across the package."""


class ThresholdProbeError(Exception):
    """Base class for all package errors."""


class BadParameter(ThresholdProbeError, ValueError):
    pass


class EmptyCondition(ThresholdProbeError, ValueError):
    """Conditioning event has probability zero."""


class DegenerateParameters(ThresholdProbeError, ValueError):
    """Two policy parameters coincide and a closed form has a vanishing denominator."""


class TooLarge(ThresholdProbeError, ValueError):
    """Exhaustive enumeration would exceed its size bound."""


class BelowThreshold(ThresholdProbeError, ValueError):
    pass
