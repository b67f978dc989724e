"""Exception hierarchy shared across the package."""


class BfclaError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(BfclaError, ValueError):
    pass


class ConvergenceFailure(BfclaError, RuntimeError):
    pass


class DegenerateSample(BfclaError, ValueError):
    """A sample covariance is singular (rank-deficient data or N <= d)."""


class BracketFailure(BfclaError, RuntimeError):
    """No sign change of the secular function inside the derived bracket."""


class IterationBudgetExceeded(BfclaError, RuntimeError):
    """The CLA hit its worst-case iteration bound without a certificate."""


class ConfigError(BfclaError, ValueError):
    pass


class InputError(BfclaError, ValueError):
    """Base class for CSV ingestion problems."""


class ParseError(InputError):
    pass


class RaggedRows(InputError):
    pass


class NonFinite(InputError):
    pass
