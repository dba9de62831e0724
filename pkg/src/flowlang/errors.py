"""Error types shared across the pipeline stages."""


class FormatError(ValueError):
    """A file or stream does not conform to its declared format."""


class DataError(ValueError):
    """Input is well-formed but unusable (e.g. single-class labels)."""


class CorruptModelError(FormatError):
    """A model file fails structural validation."""


class ModelVersionError(FormatError):
    """A model file declares a version this code does not support."""
