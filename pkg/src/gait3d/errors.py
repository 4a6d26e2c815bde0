"""Exception types shared across the package."""


class GaitError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(GaitError, ValueError):
    """Image or channel dimensions do not match."""


class ShapeError(GaitError, ValueError):
    """Tensor or parameter shapes are incompatible."""


class ParameterError(GaitError, ValueError):
    """An argument value is outside its allowed domain."""


class BoundsError(GaitError, IndexError):
    """Pixel coordinates fall outside the image."""


class EmptySilhouetteError(GaitError, ValueError):
    """A crop that should contain foreground is empty."""


class GeometryError(GaitError, ValueError):
    """A rendered figure does not fit inside its frame."""


class GenerationError(GaitError, RuntimeError):
    """Synthetic dataset generation failed (e.g. profile sampling collision)."""


class DatasetError(GaitError, RuntimeError):
    """A manifest or dataset directory is invalid."""


class FormatError(GaitError, RuntimeError):
    """A serialized model file is malformed."""


class TrainingDiverged(GaitError, RuntimeError):
    """Training produced a non-finite loss."""
