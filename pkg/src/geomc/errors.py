"""Exception types raised by the sampling engine."""


class GeomcError(Exception):
    """Base class for all package errors."""


class UnsupportedPointError(GeomcError, ValueError):
    """The target density is not finite at the requested position."""


class MetricDegenerateError(GeomcError, ArithmeticError):
    """A mass matrix or metric failed Cholesky factorization even after jitter."""


class DivergedError(GeomcError, ArithmeticError):
    """An integrator step failed (non-convergent implicit solve or non-finite state)."""


class ShadowRejectionError(GeomcError, RuntimeError):
    """Rejection sampling of SHMC momenta exceeded its try cap (``a`` too negative)."""


class ConfigError(GeomcError, ValueError):
    """Invalid run configuration.

    Attributes:
        key: Offending configuration key, if known.
        line: 1-based line number in the config text, if known.
    """

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line
