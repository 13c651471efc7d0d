"""Exception hierarchy shared by the solver modules."""


class OrbitDesignError(Exception):
    """Base class for all errors raised by this package."""


class SingularMassMatrixError(OrbitDesignError):
    pass


class SingularInputMapError(OrbitDesignError):
    pass


class SingularImpactMatrixError(OrbitDesignError):
    pass


class NonFiniteStateError(OrbitDesignError):
    pass


class SolverError(OrbitDesignError):
    """Solver failure that still carries the last feasible iterate."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class DivergenceError(SolverError):
    pass


class RiccatiBlowupError(SolverError):
    pass


class LineSearchError(SolverError):
    pass


class MaxIterationsError(SolverError):
    pass


class IndefiniteHessianError(SolverError):
    pass


class ContinuationStallError(SolverError):
    pass


class SingularSensitivityError(SolverError):
    pass


class TimeBudgetError(SolverError):
    pass


class ConfigError(OrbitDesignError):
    """Raised for unparseable or invalid run configurations."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])
