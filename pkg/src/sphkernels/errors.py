"""Exception hierarchy.

Every error carries a short machine-readable ``code`` that the CLI prints as
``code: message`` on stderr.
"""


class SphKernelsError(Exception):
    code = "error"
    exit_status = 3


class DomainError(SphKernelsError, ValueError):
    code = "domain-error"
    exit_status = 2


class GammaPoleError(DomainError):
    """Argument is a pole of the Gamma function (0, -1, -2, ...)."""

    code = "gamma-pole"


class UnknownKernelError(SphKernelsError, ValueError):
    code = "unknown-kernel"
    exit_status = 2


class SeriesUnsupportedError(SphKernelsError):
    """Kernel family has no power-series route (quadrature only)."""

    code = "route-unsupported"
    exit_status = 2


class UnsupportedCompositionError(SphKernelsError):
    code = "unsupported-composition"


class ExpansionUnknownError(SphKernelsError):
    code = "expansion-unknown"
    exit_status = 2


class FitError(SphKernelsError):
    """Too few positive eigenvalues of the requested parity to fit a decay."""

    code = "parity-vanishing"


class DataError(SphKernelsError, ValueError):
    code = "data-error"
    exit_status = 2


class ConditioningError(SphKernelsError):
    code = "numerical-failure"


class ConfigError(SphKernelsError, ValueError):
    code = "config-error"
    exit_status = 2
