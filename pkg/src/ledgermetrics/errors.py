"""Exception and warning types raised across the package."""


class LedgerMetricsError(Exception):
    """Base class for every error raised by ledgermetrics."""


class ConfigError(LedgerMetricsError):
    pass


# model / metrics
class ZeroTotal(LedgerMetricsError):
    pass


class InvalidTau(LedgerMetricsError):
    pass


class InvalidM(LedgerMetricsError):
    pass


# ingest
class EmptyInput(LedgerMetricsError):
    pass


class DuplicateHeight(LedgerMetricsError):
    pass


class ParseError(LedgerMetricsError):
    """A single malformed row. Collected into the validation report, not raised."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class NegativeBalance(LedgerMetricsError):
    pass


class DuplicateAddressInSnapshot(LedgerMetricsError):
    pass


class SelfMerge(LedgerMetricsError):
    pass


class InvertedDateRange(LedgerMetricsError):
    pass


class MergeCycle(LedgerMetricsError):
    pass


# windows
class EmptyStudyWindow(LedgerMetricsError):
    pass


class EmptyWindow(LedgerMetricsError):
    pass


class MissingSnapshot(LedgerMetricsError):
    pass


class InvalidThreshold(LedgerMetricsError):
    pass


# stats
class ConstantSeries(LedgerMetricsError):
    pass


class NonPositiveData(LedgerMetricsError):
    pass


class SingularCorrelation(LedgerMetricsError):
    pass


class NoConvergence(LedgerMetricsError):
    pass


class AdequacyFailed(LedgerMetricsError):
    pass


# warnings
class AmbiguousTag(UserWarning):
    """A cluster holds addresses tagged to more than one entity."""


class HeywoodCase(UserWarning):
    """A communality exceeded 1 during factor extraction and was clamped."""


class WindowWarning(UserWarning):
    """Window configuration is statistically weak (small or overlapping windows)."""


class SchemaError(LedgerMetricsError):
    """Missing or unexpected header columns in an input file."""
