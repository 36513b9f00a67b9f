"""Exception types shared across the package."""


class WsnFusionError(Exception):
    """Base class for all errors raised by :mod:`wsnfusion`."""


class DomainError(WsnFusionError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class RangeError(WsnFusionError, ArithmeticError):
    """An argument would overflow the representable result range."""


class ConfigurationError(WsnFusionError, ValueError):
    """Inconsistent or unsupported model / experiment configuration."""


class ConfigParseError(ConfigurationError):
    """Malformed experiment configuration text.

    ``key`` and ``line`` point at the offending entry when known.
    """

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.key = key
        self.line = line
