"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid user-supplied parameters or configuration files."""


class DecompositionError(RuntimeError):
    """A Whitney decomposition could not be built with the given cutoff."""


class FitWindowError(ValueError):
    """The requested fit window is unusable (empty survival, too narrow)."""

    def __init__(self, message: str, diagnostic: dict | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}
