"""Exception types shared across the package."""


class GridRestoreError(Exception):
    """Base class for all errors raised by this package."""


class CaseFormatError(GridRestoreError):
    """The case or scenario file could not be parsed."""


class CaseValidationError(GridRestoreError):
    """A network violates one or more structural invariants."""

    def __init__(self, violations):
        self.violations = tuple(violations)
        super().__init__("; ".join(self.violations))


class UnknownIdError(GridRestoreError):
    """A referenced component id does not exist in the network."""


class InfeasibleError(GridRestoreError):
    """The optimization problem has no feasible solution."""


class UnboundedError(GridRestoreError):
    """The optimization problem is unbounded (indicates a modeling bug)."""


class SolverError(GridRestoreError):
    """The solver failed numerically or exhausted its work budget."""


class ConvergenceError(GridRestoreError):
    """An AC power flow solve did not reach the requested residual tolerance."""

    def __init__(self, message, state=None):
        self.state = state
        super().__init__(message)
