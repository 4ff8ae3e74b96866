"""Exception hierarchy shared across the package."""


class AdvCompError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AdvCompError, ValueError):
    """Invalid parameters, shapes or preconditions."""


class LoadError(AdvCompError):
    """A model bundle, dataset file or config could not be read."""


class TrainingError(AdvCompError):
    pass


class BudgetExceeded(AdvCompError):
    """A charge would push a sample or the dataset past its quota (strict mode)."""


class QuotaViolation(AdvCompError):
    """A finished run used more than the allowed average budget."""
