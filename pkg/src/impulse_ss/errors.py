"""Exception hierarchy shared by all modules."""


class ImpulseError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ImpulseError, ValueError):
    """An evaluator was called outside its domain (e.g. a non-positive state)."""


class InvalidSpecError(ImpulseError, ValueError):
    """A problem instance failed validation.

    The failing :class:`~impulse_ss.model.ValidationReport` is kept on
    ``self.report``.
    """

    def __init__(self, report):
        self.report = report
        detail = "; ".join(f"{name}: {msg}" for name, msg in report.violations)
        super().__init__(f"invalid problem spec ({detail})")


class SolverError(ImpulseError, RuntimeError):
    """Root finding did not converge. ``bracket`` holds the best bracket seen."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class ConsistencyError(ImpulseError, RuntimeError):
    """A computed solution failed its own residual check."""


class NotApplicableError(ImpulseError, ValueError):
    """The requested quantity does not exist for this outcome (e.g. never invest)."""


class PolicyError(ImpulseError, ValueError):
    """An impulse policy is not admissible."""


class SimulationError(ImpulseError, RuntimeError):
    """The Monte-Carlo engine produced a non-finite payoff."""
