"""Exception types shared across the package."""


class QnboError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(QnboError):
    """Invalid configuration: bad field values, unknown keys, incompatible options."""


class NumericalError(QnboError):
    """A solve produced non-finite values or violated a numerical precondition.

    Carries the phase (e.g. "warmup", "qn", "subroutine_b", "cg") and, when
    known, the iteration index at which the failure occurred.
    """

    def __init__(self, message, phase=None, iteration=None):
        super().__init__(message)
        self.phase = phase
        self.iteration = iteration

    def __str__(self):
        base = super().__str__()
        loc = []
        if self.phase is not None:
            loc.append(f"phase={self.phase}")
        if self.iteration is not None:
            loc.append(f"iteration={self.iteration}")
        return f"{base} ({', '.join(loc)})" if loc else base


class RejectedPairError(QnboError):
    """A curvature pair violating the BFGS curvature condition reached a kernel.

    Callers are expected to filter pairs through ``push_pair`` before they
    ever land in a history that is applied in BFGS mode.
    """


class UnsupportedOracleError(QnboError):
    """The problem does not expose an oracle required by the operation."""
