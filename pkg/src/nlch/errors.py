"""Exception taxonomy shared across the package.

Exit-code mapping used by the CLI: configuration errors exit with 2,
numerical errors with 3, failed diagnostic checks with 1.
"""


class ConfigurationError(ValueError):
    """Invalid or incompatible configuration (bad keys, modes, preconditions)."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = list(errors) if errors else [message]


class NumericalError(RuntimeError):
    """A numerical procedure failed to converge.

    Carries the best iterate seen and its residual so callers can inspect
    (and, for time stepping, the partial trajectory computed so far).
    """

    def __init__(self, message, best=None, residual=None, partial=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.partial = partial
