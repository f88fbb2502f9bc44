"""Exception hierarchy shared by every rowtrack module."""


class RowtrackError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RowtrackError, ValueError):
    """Invalid geometry or tracker configuration.

    ``violations`` carries every problem found during validation, not only
    the first one that determined the exception type.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations else [message]


class NonPowerOfTwo(ConfigError):
    pass


class CounterTooNarrow(ConfigError):
    pass


class UntaggedModeInfeasible(ConfigError):
    pass


class WaysInsufficient(ConfigError):
    pass


class RowOutOfRange(RowtrackError, IndexError):
    pass


class AddressOutOfRange(RowtrackError, IndexError):
    pass


class InfeasibleRate(RowtrackError, ValueError):
    pass


class EmptyPool(RowtrackError, ValueError):
    pass


class MalformedTrace(RowtrackError, ValueError):
    def __init__(self, lineno, line, reason):
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno


class NonMonotonicTime(RowtrackError, ValueError):
    pass


class AlreadyReserved(RowtrackError):
    pass


class AlreadyMax(RowtrackError):
    pass


class AtCap(RowtrackError):
    """Escalation requested beyond the configured maximum SAC state."""


class UnorderedInput(RowtrackError, ValueError):
    pass


class CascadeLimitExceeded(RowtrackError, RuntimeError):
    pass
