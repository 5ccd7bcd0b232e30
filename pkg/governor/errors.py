class GovernorError(Exception):
    """Raised when a governor operation cannot produce a result."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class InvalidParametersError(GovernorError):
    """Raised for non-finite inputs, non-positive gains or c2 <= c1."""


class NotHurwitzError(GovernorError):
    """Raised when a closed-loop matrix has an eigenvalue with non-negative real part."""


class SingularSystemError(NotHurwitzError):
    """Raised when the Lyapunov operator of a matrix is singular."""


class NotCriticallyDampedError(GovernorError):
    """Raised when the closed-form peak is requested for a non critically damped loop."""


class NoFeasibleAlphaError(GovernorError):
    """Raised when no point of the navigation path lies inside the local safe zone."""


class InvalidPathError(GovernorError):
    """Raised for degenerate navigation paths."""


class NoPathError(GovernorError):
    """Raised when grid search exhausts its open set."""


class ScenarioError(GovernorError):
    """Raised when a scenario file fails to parse or validate."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
