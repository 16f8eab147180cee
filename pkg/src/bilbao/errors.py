"""Exception types shared across the package."""


class BilbaoError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BilbaoError):
    """Invalid configuration: bad budgets, unknown names, malformed config files."""


class DataError(BilbaoError):
    """Invalid data: wrong dimensions, non-finite values, empty datasets."""


class NumericalError(BilbaoError):
    """Linear-algebra failure that survives the jitter escalation."""


class DegenerateCandidateError(BilbaoError):
    """A fantasy candidate with zero predictive variance and zero noise."""
