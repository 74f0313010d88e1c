"""Exception hierarchy. Each family maps onto a stable CLI exit code."""


class MaserError(Exception):
    exit_code = 1


class ConfigError(MaserError):
    """Invalid or schema-violating configuration."""

    exit_code = 2

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class DomainError(MaserError, ValueError):
    """An argument lies outside the domain of a formula."""

    exit_code = 3


class SingularDetuningError(DomainError):
    """Atomic detuning is zero, so the LLE reduction is undefined."""


class NumericalError(MaserError):
    exit_code = 4


class BlowUpError(NumericalError):
    """Integration produced non-finite values or exceeded the amplitude cap.

    ``step`` is the index of the offending step; ``partial`` may hold the
    trajectory recorded up to that point (set by the run drivers).
    """

    def __init__(self, message, step, max_abs=float("nan")):
        super().__init__(message)
        self.step = step
        self.max_abs = max_abs
        self.partial = None


class FitFailure(NumericalError):
    """Levenberg-Marquardt could not make progress; carries the initial guess."""

    def __init__(self, message, initial_guess=None):
        super().__init__(message)
        self.initial_guess = initial_guess


class SetupError(MaserError):
    """Sweep output location unusable; raised before any compute."""

    exit_code = 2
