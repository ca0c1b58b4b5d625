"""Dense tensor substrate: 3D convolution kernels, activations and file I/O."""
import numpy as np

from ._backend import available_backends, backend_name, set_backend, use_backend
from .activation import DEFAULT_SLOPE, leaky_relu, leaky_relu_grad
from .container import read_meta, read_tensor, write_tensor
from .conv import (
    ConvSpec,
    conv3d_backward_data,
    conv3d_backward_weights,
    conv3d_forward,
    conv3d_transposed_backward,
    conv3d_transposed_forward,
)

DTYPES = {"f32": np.float32, "f64": np.float64}

__all__ = [
    "ConvSpec",
    "DEFAULT_SLOPE",
    "DTYPES",
    "available_backends",
    "backend_name",
    "conv3d_backward_data",
    "conv3d_backward_weights",
    "conv3d_forward",
    "conv3d_transposed_backward",
    "conv3d_transposed_forward",
    "leaky_relu",
    "leaky_relu_grad",
    "read_meta",
    "read_tensor",
    "set_backend",
    "use_backend",
    "write_tensor",
]
