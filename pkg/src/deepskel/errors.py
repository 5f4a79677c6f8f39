"""Shared exception types."""


class ShapeMismatch(ValueError):
    """Array shapes are incompatible for the requested operation."""


class ScaleOverflow(ValueError):
    """A positive scale exceeds what the largest receptive field can capture."""


class ClassOutOfRange(ValueError):
    """A groundtruth class index exceeds the available score channels."""


class DataFormat(ValueError):
    """A file or record does not match its documented format."""


class IOFailure(OSError):
    """A filesystem read/write failed."""
