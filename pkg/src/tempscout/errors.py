"""Exception taxonomy shared across the package.

Each family maps to a distinct CLI exit code so batch drivers can tell
"file was broken" apart from "you asked for something impossible" and
"the math degenerated".
"""


class TempscoutError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DatasetError(TempscoutError):
    """Problems with dataset files or their contents."""

    exit_code = 2


class MalformedHeaderError(DatasetError):
    """Metadata file is missing, unreadable, or fails the magic/field check."""


class PayloadSizeMismatchError(DatasetError):
    """Binary payload length disagrees with the declared shape."""


class NonFiniteValueError(DatasetError):
    """Embeddings or labels contain NaN or Inf."""


class EmptyClassError(DatasetError):
    """A class index in 0..C-1 has zero samples."""


class ZeroRowError(DatasetError):
    """A sample embedding is the all-zero vector and cannot be L2-normalized."""


class ClassTooSmallError(DatasetError):
    """A class has too few samples to stratify into train and val."""


class ConfigError(TempscoutError):
    """Invalid configuration values or flag grammar."""

    exit_code = 3


class NumericalError(TempscoutError):
    """Degenerate data made a computation undefined."""

    exit_code = 4


class ZeroVarianceError(NumericalError):
    """An input with zero variance where spread is required."""


class UnderdeterminedError(NumericalError):
    """Fewer observations than a regression needs."""
