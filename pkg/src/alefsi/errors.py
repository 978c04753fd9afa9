"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value, file, or mesh/quadrature request."""


class DegenerateGeometryError(RuntimeError):
    """Interface height dropped to or below the positivity floor."""

    def __init__(self, message, node=None, x=None, value=None, step=None):
        super().__init__(message)
        self.node = node
        self.x = x
        self.value = value
        self.step = step


class SolverError(RuntimeError):
    """Linear solve failed (singular matrix or residual above tolerance)."""

    def __init__(self, message, dof=None, residual=None):
        super().__init__(message)
        self.dof = dof
        self.residual = residual
