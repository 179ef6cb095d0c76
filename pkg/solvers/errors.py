"""Exception hierarchy shared by every solver.

Each class carries the process exit code that `qps` maps it to:
1 for input, parse or usage problems, 2 for iteration limits and
3 for infeasible or numerically singular problems.
"""
from typing import Optional


class QpError(Exception):
    """Base class for all solver-suite errors."""
    exit_code = 1

    def __init__(self, message: str = None):
        super().__init__(message or self.__class__.__name__)


# --- input / usage (exit 1) ---

class UsageError(QpError):
    exit_code = 1


class DimensionMismatch(QpError):
    exit_code = 1


class InvalidProblem(QpError):
    """Problem data violates a structural requirement (lb > ub, non-finite data, ...)."""
    exit_code = 1


class ProblemFormatError(QpError):
    """Raised by the QPLite reader; `line` is 1-based."""
    exit_code = 1

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# --- iteration limits (exit 2) ---

class IterationLimit(QpError):
    """An iterative method stopped early; `best` and `report` hold what it had."""
    exit_code = 2

    def __init__(self, message: str = None, best=None, report=None):
        super().__init__(message)
        self.best = best
        self.report = report


class MaxIterations(IterationLimit):
    pass


class MaxInnerIterations(IterationLimit):
    pass


class MaxOuterIterations(IterationLimit):
    pass


class CycleDetected(IterationLimit):
    pass


# --- infeasible / singular (exit 3) ---

class NumericalFailure(QpError):
    exit_code = 3


class SingularKkt(NumericalFailure):
    pass


class NotPositiveDefinite(NumericalFailure):
    pass


class SingularSchur(NumericalFailure):
    pass


class RankDeficientA(NumericalFailure):
    pass


class ReducedHessianNotPd(NumericalFailure):
    pass


class SingularNormalEquations(NumericalFailure):
    pass


class SingularNewtonMatrix(NumericalFailure):
    pass


class DependentConstraint(NumericalFailure):
    pass


class NotInWorkingSet(NumericalFailure):
    pass


class PartitionViolation(NumericalFailure):
    pass


class InfeasibleProblem(NumericalFailure):
    pass


class InfeasibleStart(InfeasibleProblem):
    pass


class PresumedInfeasible(InfeasibleProblem):
    pass
