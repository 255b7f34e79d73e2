"""Exception hierarchy shared by every stage of the pipeline."""


class WeqaError(Exception):
    """Base class for all errors raised by this package."""


class ImageDecodeError(WeqaError):
    """File could not be read or decoded as a raster image."""


class UnsupportedBitDepthError(WeqaError):
    """Image decoded fine but is not 8-bit grayscale or RGB."""


class ManifestError(WeqaError):
    """Malformed dataset manifest. ``row`` is the 1-based data row, if known."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DimensionMismatchError(WeqaError, ValueError):
    pass


class LevelsError(WeqaError, ValueError):
    """Requested more decomposition levels than the image size admits."""


class UndefinedCorrelationError(WeqaError, ValueError):
    """Correlation requested on data with zero variance."""


class ModelFormatError(WeqaError):
    """Model or dataset file is truncated, corrupt, or of an unknown version."""


class ConfigMismatchError(WeqaError):
    """A model cannot be applied to an input (descriptor or wavelet config disagrees)."""
