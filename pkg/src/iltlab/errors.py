"""Exception hierarchy.

Configuration problems derive from :class:`ConfigError` (CLI exit code 2);
numerical failures derive from :class:`NumericalError` (exit code 3).
"""


class IltError(Exception):
    pass


class ConfigError(IltError, ValueError):
    """Invalid input or experiment configuration."""


class NumericalError(IltError, ArithmeticError):
    """A numerical procedure failed to meet its tolerance."""


class NotSymmetric(ConfigError):
    pass


class ProbabilitiesNotNormalized(ConfigError):
    pass


class DegenerateSupport(ConfigError):
    pass


class MismatchedHorizons(ConfigError):
    pass


class MismatchedConfig(ConfigError):
    pass


class ConditionViolated(ConfigError):
    """(d, p) outside the regime p(d - 2) < d, d >= 2."""


class BoxTooLarge(ConfigError):
    pass


class BudgetExceeded(ConfigError):
    pass


class MissingMoment(ConfigError, KeyError):
    pass


class InconsistentMoment(IltError):
    """Two methods disagree on the same moment beyond their error bars."""


class NoConvergence(NumericalError):
    pass


class ResidualTooLarge(NumericalError):
    pass
