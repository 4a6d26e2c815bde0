"""From-scratch 3D convolutional network: ops, losses, model assembly, storage."""

from .losses import (
    batch_cross_entropy,
    categorical_accuracy,
    mean_absolute_error,
    softmax,
    softmax_cross_entropy,
)
from .model import (
    Conv3d,
    Dense,
    Dropout,
    Flatten,
    MaxPool3d,
    ModelSpec,
    Network,
    Softmax,
    default_model_spec,
    init_params,
    param_shapes,
)
from .ops import (
    PoolIndex,
    conv3d_backward,
    conv3d_forward,
    dense_backward,
    dense_forward,
    dropout,
    dropout_backward,
    maxpool3d_backward,
    maxpool3d_forward,
    sgd_step,
    tanh_backward,
    tanh_forward,
)
from .serialize import FORMAT_VERSION, MAGIC, load_model, save_model

__all__ = [
    "softmax",
    "softmax_cross_entropy",
    "batch_cross_entropy",
    "categorical_accuracy",
    "mean_absolute_error",
    "Conv3d",
    "MaxPool3d",
    "Flatten",
    "Dropout",
    "Dense",
    "Softmax",
    "ModelSpec",
    "Network",
    "default_model_spec",
    "init_params",
    "param_shapes",
    "conv3d_forward",
    "conv3d_backward",
    "maxpool3d_forward",
    "maxpool3d_backward",
    "PoolIndex",
    "dense_forward",
    "dense_backward",
    "tanh_forward",
    "tanh_backward",
    "dropout",
    "dropout_backward",
    "sgd_step",
    "MAGIC",
    "FORMAT_VERSION",
    "save_model",
    "load_model",
]
