"""Exception types shared across the package."""


class BayesVitError(Exception):
    """Base class for all package errors."""


class DomainError(BayesVitError, ValueError):
    """An argument lies outside the domain of a function or distribution."""


class InfeasiblePathError(BayesVitError):
    """No state path has positive weight (or the given path has zero weight)."""


class ModeInfeasibleError(BayesVitError):
    """Posterior-mode / M-step formula is undefined for these hyperparameters."""


class InfeasibleTemperatureError(BayesVitError):
    """A tempered Dirichlet parameter is not positive at this inverse temperature."""


class InstanceTooLargeError(BayesVitError):
    """Exhaustive enumeration was requested for too many paths."""
