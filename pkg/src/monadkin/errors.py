"""Exception hierarchy shared by the solvers, diagnostics and the CLI."""


class MonadkinError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MonadkinError, ValueError):
    """Invalid grid, parameters, scenario or config file."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class PreconditionError(MonadkinError, ValueError):
    """An operation was called outside its documented domain."""


class UnsupportedSchemeError(ConfigurationError):
    """Time stepper does not support the grid boundary."""


class PathError(MonadkinError, ValueError):
    """Circulation loop is not closed or crosses low-density nodes."""


class NumericalError(MonadkinError, RuntimeError):
    """A numerical operation failed (singular solve, overflow...)."""


class BlowUpError(NumericalError):
    """Fields became non-finite during time stepping."""

    def __init__(self, message, node=None, step=None):
        super().__init__(message)
        self.node = node
        self.step = step


class SolverDegeneracyError(NumericalError):
    """Too many nodes fell below the density floor for the hydrodynamic form."""
