"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called outside its precondition (shape, range)."""


class SolverError(RuntimeError):
    """An internal iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (final residual {residual:.3e})")
        self.residual = residual


class DivergenceError(RuntimeError):
    """A simulated path left the finite region (NaN/inf or norm above the guard)."""

    def __init__(self, t, norm):
        super().__init__(f"path diverged at t={t:.6g} with |x|={norm:.3e}")
        self.t = t
        self.norm = norm


class FitError(ValueError):
    """A rate fit could not be performed on the requested window."""


class QuadratureError(RuntimeError):
    def __init__(self, message, achieved):
        super().__init__(f"{message} (achieved relative error {achieved:.3e})")
        self.achieved = achieved


class ConfigError(ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
