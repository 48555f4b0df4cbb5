"""Exception types shared across the package."""


class FracTwoPhaseError(Exception):
    """Base class for all package-specific errors."""


class InvalidExponentError(FracTwoPhaseError, ValueError):
    """Integrability exponent p outside the admissible range (p > 1, finite)."""


class InvalidOrderError(FracTwoPhaseError, ValueError):
    """Fractional order s outside (0, 1]."""


class GridMismatchError(FracTwoPhaseError, ValueError):
    """Fields that must share one grid live on different grids."""


class OracleSizeError(FracTwoPhaseError, ValueError):
    """Dense quadrature oracle requested on a grid above its size cap."""


class ValidationError(FracTwoPhaseError, ValueError):
    """Problem data violates a standing assumption; no solve is started."""


class ConfigParseError(FracTwoPhaseError, ValueError):
    """Config file is malformed or contains unknown keys."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FieldReadError(FracTwoPhaseError, ValueError):
    """Field file is truncated, padded, or otherwise inconsistent."""


class ReportWriteError(FracTwoPhaseError, ValueError):
    """Report contains non-finite entries and was refused at write time."""


class NonConvergenceError(FracTwoPhaseError, RuntimeError):
    """Iteration budget exhausted before the residual tolerance was met.

    Carries the iteration count and last residual so the caller can retry
    with a larger budget.
    """

    def __init__(self, iterations, residual, stage=None):
        self.iterations = iterations
        self.residual = residual
        self.stage = stage
        msg = f"no convergence after {iterations} iterations (residual {residual:.3e})"
        if stage is not None:
            msg += f" at continuation stage {stage}"
        super().__init__(msg)


class DegenerateFitError(FracTwoPhaseError, RuntimeError):
    """Fewer than three rate-study points sit above the noise floor."""


class FixedPointNonConvergenceError(FracTwoPhaseError, RuntimeError):
    """Outer fixed-point iteration did not reach its tolerance.

    This is a reported outcome, not a claim that no fixed point exists.
    The full residual history is attached for diagnosis.
    """

    def __init__(self, history):
        self.history = list(history)
        super().__init__(
            f"fixed-point iteration stalled after {len(self.history)} outer steps "
            f"(last residual {self.history[-1]:.3e})" if self.history
            else "fixed-point iteration produced no steps"
        )


class AprioriBoundViolationError(FracTwoPhaseError, RuntimeError):
    """A fixed-point iterate escaped the a-priori ball; indicates a solver bug."""

    def __init__(self, message, dump=None):
        self.dump = dump or {}
        super().__init__(message)


class InterphaseNotNegligibleError(FracTwoPhaseError, RuntimeError):
    """Strong phase-convergence check refused: the limit inter-phase has
    non-negligible measure, so only weak-* convergence is available."""
