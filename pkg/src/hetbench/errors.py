"""Exception types shared across the benchmark."""


class HetbenchError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(HetbenchError):
    """An argument violates a documented precondition."""


class ZeroVector(InvalidInput):
    """A vector that must be nonzero has zero norm."""


class ShapeMismatch(InvalidInput):
    """Array dimensions disagree with the declared shapes."""


class FormatError(HetbenchError):
    """A binary input file does not follow the expected layout."""


class PartitionRetryExhausted(HetbenchError):
    """No all-clients-nonempty split was found within the retry budget."""


class SupportError(HetbenchError):
    """P places probability mass where Q has none, so KL(P||Q) diverges."""


class CoalitionTooLarge(InvalidInput):
    """Exact Shapley enumeration was requested for too many players."""


class NumericalError(HetbenchError):
    """A computation produced non-finite or inconsistent values."""


class ConfigError(HetbenchError):
    """An experiment configuration is malformed or out of range."""


class ReportError(HetbenchError):
    """Result sets cannot be combined into a single comparison report."""
