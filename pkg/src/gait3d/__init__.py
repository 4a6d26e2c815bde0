"""Gait-based person identification from video silhouettes.

The package covers the full path from raw grayscale frames to a trained
classifier: background subtraction and silhouette normalization, binary
skeletonization, a small 3D convolutional network trained with SGD, a
procedural walking-figure generator for self-contained experiments, and a
command line front end tying the stages together.
"""

from . import dataset, imageio, pipeline, segmentation, skeleton, synthgait
from .errors import (
    BoundsError,
    DatasetError,
    DimensionError,
    EmptySilhouetteError,
    FormatError,
    GaitError,
    GenerationError,
    GeometryError,
    ParameterError,
    ShapeError,
    TrainingDiverged,
)
from .neural import Network, ModelSpec, default_model_spec, load_model, save_model
from .rng import derive_seed, generator

__version__ = "0.1.0"

__all__ = [
    "BoundsError",
    "DatasetError",
    "DimensionError",
    "EmptySilhouetteError",
    "FormatError",
    "GaitError",
    "GenerationError",
    "GeometryError",
    "ModelSpec",
    "Network",
    "ParameterError",
    "ShapeError",
    "TrainingDiverged",
    "__version__",
    "dataset",
    "default_model_spec",
    "derive_seed",
    "generator",
    "imageio",
    "load_model",
    "pipeline",
    "save_model",
    "segmentation",
    "skeleton",
    "synthgait",
]
