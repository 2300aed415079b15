"""Exception types shared across the simulator and processing stages."""


class AmbientSimError(Exception):
    """Base class for all library errors."""


class ValidationError(AmbientSimError):
    """A field failed validation. Carries the offending field name."""

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class ParseError(AmbientSimError):
    """Scenario file could not be parsed. Carries a 1-based line number when known."""

    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# --- waveform synthesis / propagation ---

class SampleRateTooLow(AmbientSimError):
    """Sample rate below the Nyquist requirement for direct RF-rate synthesis."""


class EmptySubcarrierSet(AmbientSimError):
    """OFDM config has no subcarriers."""


class TrajectoryOutOfRange(AmbientSimError):
    """A path-distance trajectory was queried outside its time domain."""


# --- mixing / Doppler ---

class LengthMismatch(AmbientSimError):
    """Two sample sequences differ in length."""


class RateMismatch(AmbientSimError):
    """Two sample sequences differ in sample rate or time origin."""


class CutoffAboveNyquist(AmbientSimError):
    """Filter cutoff at or above half the sample rate."""


class ZeroMagnitudeSample(AmbientSimError):
    """Phase requested on a sample whose magnitude is numerically zero."""


class SequenceTooShort(AmbientSimError):
    """Sequence shorter than the differencing step requires."""


# --- sanitization ---

class OrderZero(AmbientSimError):
    """Filter order below one."""


class TooFewPoints(AmbientSimError):
    """Not enough constellation points for the requested operation."""


class EmptyFrame(AmbientSimError):
    """A constellation frame ended up with no points. Signals a degenerate
    (static or fully discarded) window; callers treat it as data, not a bug."""


class StageError(AmbientSimError):
    """Wraps an error raised inside a named sanitization stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}': {cause}")


# --- beamforming ---

class ChannelGeometryMismatch(AmbientSimError):
    """Baseband channel count does not match the RX antenna list."""


class TimestampOutOfRange(AmbientSimError):
    """Requested time not covered by the stream (after nearest-sample alignment)."""


# --- DNN numerics ---

class PatchSizeIndivisible(AmbientSimError):
    """Patch size does not divide the frame dimensions."""


class IndivisibleDims(AmbientSimError):
    """Decoder shape formula applied to indivisible channel/spatial dims."""


class NonBinaryTarget(AmbientSimError):
    """Mask target vector contains values other than 0 and 1."""


class DimMismatch(AmbientSimError):
    """Prediction and target tensors differ in shape."""


class EmptyPersonList(AmbientSimError):
    """Grouping loss called with no persons."""


# --- evaluation metrics ---

class RasterMismatch(AmbientSimError):
    """Mask pair defined on differently shaped rasters."""


class EmptyScoreList(AmbientSimError):
    """AP summary called with no scores."""


class NoVisibleKeypoints(AmbientSimError):
    """Keypoint metric called with no visible keypoints."""


# --- file I/O ---

class SchemaError(AmbientSimError):
    """CSV input does not match the documented schema. Carries row context."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        ctx = ""
        if row is not None:
            ctx += f" (row {row}"
            ctx += f", column '{column}')" if column is not None else ")"
        elif column is not None:
            ctx += f" (column '{column}')"
        super().__init__(message + ctx)
