"""Exception types shared across the package.

Every failure mode raised by the library derives from M2MError so callers
(and the CLI) can catch one base class.
"""


class M2MError(Exception):
    """Base class for all package errors."""


# ---- patch / dataset level ----

class GridOverflow(M2MError):
    """Patch grid does not fit inside the frame."""


class EmptyDataset(M2MError):
    """Operation requires a non-empty dataset."""


class ShapeMismatch(M2MError):
    """Array shapes are incompatible."""


class EmptyInput(M2MError):
    """Operation requires non-empty input."""


# ---- binary file formats ----

class BadMagic(M2MError):
    """File does not start with the expected magic bytes."""


class TruncatedFile(M2MError):
    """File ends before the declared payload."""


class VersionMismatch(M2MError):
    """File format version is not supported."""


class MalformedHeader(M2MError):
    """Header fields are structurally invalid."""


# ---- dsp ----

class InvalidFactors(M2MError):
    """Resampling factors must be positive integers."""


class LengthMismatch(M2MError):
    """1-D signal / spectrum length is inconsistent."""


# ---- calibration ----

class GridMismatch(M2MError):
    """Two spectral grids (fft size, rate, segments) do not line up."""


class NonFiniteInput(M2MError):
    """Input contains NaN or Inf where finite values are required."""


class SegmentOutOfRange(M2MError):
    """Depth segment index outside the transfer function's rows."""


class SizeMismatch(M2MError):
    """Patch does not fit the transfer function's FFT size."""


# ---- learn ----

class DimMismatch(M2MError):
    """Model input dimension does not match the data."""


class SingleClassDataset(M2MError):
    """Training/evaluation needs both classes present."""


class UnlabeledData(M2MError):
    """Labeled patches required but a label is missing."""


class InvalidConfig(M2MError):
    """Configuration value out of range."""


# ---- cli ----

class BadConfig(M2MError):
    """Config file could not be parsed."""


class IoError(M2MError):
    """Filesystem operation failed."""


class IncompatibleDatasets(M2MError):
    """Datasets disagree on rate/shape where they must match."""
