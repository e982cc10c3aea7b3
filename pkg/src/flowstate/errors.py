"""Exception types shared across the package."""


class FlowstateError(Exception):
    """Base class for every error raised by this package."""


class ParseError(FlowstateError):
    """CSV ingestion failure; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MalformedRow(ParseError):
    """Row with the wrong number of fields or a non-numeric field."""


class NonMonotonicTime(ParseError):
    """Timestamp not strictly greater than the previous one."""


class NonFiniteValue(ParseError):
    """NaN or infinity where a finite number is required."""


class UnknownStateToken(ParseError):
    """Label token outside the free/steady/congested vocabulary."""


class EmptyStream(FlowstateError):
    """An operation received a stream with no samples."""


class NoReferenceBefore(FlowstateError):
    """A motion sample precedes every speed or label sample."""

    def __init__(self, t: float):
        super().__init__(
            f"motion sample at t={t!r} has no speed/label sample at or before it"
        )
        self.t = t


class InvalidConfig(FlowstateError):
    """Configuration value out of range; names the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class TooFewSamples(FlowstateError):
    """Not enough raw samples for the requested window."""


class TooFewWindows(FlowstateError):
    """Not enough first-stage rows for the requested second-stage window."""


class ZeroMean(FlowstateError):
    """Coefficient of variation is undefined for zero-mean data."""


class ZeroVariance(FlowstateError):
    """Skewness/kurtosis are undefined for constant data."""


class MissingColumn(FlowstateError):
    """First-stage matrix lacks a (feature, channel) column the table needs."""


class NoSpeedRows(FlowstateError):
    """Threshold table has no speed-channel rows to project onto."""


class DimensionMismatch(FlowstateError):
    """Vector or matrix shapes do not chain."""


class ArityMismatch(FlowstateError):
    """Input width differs from the model's input layer."""


class ValueOutOfRange(FlowstateError):
    """Input values outside the unit interval."""


class TooLargeToEnumerate(FlowstateError):
    """Exact enumeration requested for a model beyond the unit budget."""


class EmptyBatch(FlowstateError):
    """Training step received an empty batch."""


class EmptyTrainingSet(FlowstateError):
    """Training requested with no labeled examples."""


class SingularCovariance(FlowstateError):
    """Pooled covariance not invertible even after regularization."""


class TooFewVectors(FlowstateError):
    """Not enough feature vectors to form a split."""


class UnsupportedVersion(FlowstateError):
    """Model file written by an unknown format version."""


class CorruptFile(FlowstateError):
    """Model file truncated or structurally invalid."""


class IoFailure(FlowstateError):
    """Filesystem error while writing or reading an artifact."""
