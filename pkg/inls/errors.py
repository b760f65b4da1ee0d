from enum import IntEnum


class ExitCode(IntEnum):
    OK = 0
    VALIDATION = 2
    OUTPUT_CONFLICT = 3
    RUNTIME_GUARD = 4
    SOLVER_FAILURE = 5


class InlsError(Exception):
    """
    Root of every domain error.

    `reason` is the machine-readable tag written to fate files and sweep rows,
    `exit_code` is what the CLI returns when the error escapes a command.
    """

    exit_code: ExitCode = ExitCode.RUNTIME_GUARD

    def __init__(self, message: str, reason: str | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.reason = reason or type(self).__name__


# --- Validation (exit 2) ---


class ValidationFailure(InlsError):
    exit_code = ExitCode.VALIDATION


class OutOfRange(ValidationFailure):
    def __init__(self, param: str, message: str) -> None:
        super().__init__(message, reason=f"OutOfRange({param})")
        self.param = param


class ConfigInvalid(ValidationFailure):
    pass


class UnsupportedGrid(ValidationFailure):
    pass


class GridCutoffMismatch(ValidationFailure):
    pass


class SymmetryViolation(ValidationFailure):
    pass


class SingularAtOrigin(ValidationFailure):
    pass


class ResampleOutOfDomain(ValidationFailure):
    pass


class ZeroField(ValidationFailure):
    pass


class NotAtThreshold(ValidationFailure):
    pass


class AboveThreshold(ValidationFailure):
    pass


# --- Output conflict (exit 3) ---


class OutputConflict(InlsError):
    exit_code = ExitCode.OUTPUT_CONFLICT


# --- Runtime guards (exit 4) ---


class RuntimeGuard(InlsError):
    exit_code = ExitCode.RUNTIME_GUARD


class TailMassExceeded(RuntimeGuard):
    pass


class VarianceUnreliable(RuntimeGuard):
    pass


class InsufficientSamples(RuntimeGuard):
    pass


class BoundaryContaminated(RuntimeGuard):
    pass


class ConditionsInconsistent(RuntimeGuard):
    pass


# --- Solver failures (exit 5) ---


class SolverFailure(InlsError):
    exit_code = ExitCode.SOLVER_FAILURE


class NoConvergence(SolverFailure):
    def __init__(self, max_iter: int, residual: float) -> None:
        super().__init__(
            f"ground state iteration did not converge in {max_iter} steps "
            f"(last residual {residual:.3e})",
            reason=f"NoConvergence({max_iter})",
        )
        self.max_iter = max_iter
        self.residual = residual


class NonPositive(SolverFailure):
    pass


class GridTooSmall(SolverFailure):
    pass


class StepNotConverged(SolverFailure):
    def __init__(self, dt: float, iterations: int, change: float) -> None:
        super().__init__(
            f"implicit step dt={dt:.3e} did not settle in {iterations} iterations "
            f"(last change {change:.3e})",
            reason="StepNotConverged",
        )
        self.dt = dt
        self.change = change
