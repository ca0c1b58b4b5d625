"""3D convolution over (channels, time, height, width) tensors.

Tensors are plain C-contiguous numpy arrays of float32 or float64. There is no
batch axis; callers loop over samples. Convolution here is cross-correlation
with zero padding, as in most deep-learning frameworks.
"""
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from . import _backend

AXES = ("time", "height", "width")


def _triple(value, name):
    if isinstance(value, (int, np.integer)):
        value = (int(value),) * 3
    value = tuple(int(v) for v in value)
    if len(value) != 3:
        raise ValueError(f"{name} needs 3 entries, got {value}")
    return value


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of one 3D convolution layer.

    ``kernel``, ``stride`` and ``padding`` accept an int (applied to all three
    axes) or a (t, h, w) triple.
    """

    in_channels: int
    out_channels: int
    kernel: tuple = (3, 3, 3)
    stride: tuple = (1, 1, 1)
    padding: tuple = (0, 0, 0)

    def __post_init__(self):
        for name in ("kernel", "stride", "padding"):
            object.__setattr__(self, name, _triple(getattr(self, name), name))
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.padding) < 0:
            raise ValueError(f"invalid geometry {self}")

    @classmethod
    def same(cls, in_channels, out_channels, kernel, stride=1):
        """Odd cubic kernel with the padding that keeps stride-1 extents unchanged."""
        return cls(in_channels, out_channels, kernel, stride, kernel // 2)

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels) + self.kernel

    def output_extents(self, extents):
        out = []
        for axis, n, k, s, p in zip(AXES, extents, self.kernel, self.stride, self.padding):
            o = (n + 2 * p - k) // s + 1
            if o < 1:
                raise ShapeError(f"{axis} extent {n} too small for kernel {k} with padding {p}", axis=axis)
            out.append(o)
        return tuple(out)

    def transposed_extents(self, extents, output_padding=(0, 0, 0)):
        out = []
        for axis, n, k, s, p, op in zip(AXES, extents, self.kernel, self.stride, self.padding, output_padding):
            o = (n - 1) * s - 2 * p + k + op
            if o < 1:
                raise ShapeError(f"transposed {axis} extent {o} < 1", axis=axis)
            out.append(o)
        return tuple(out)


def _check_tensor(x, name):
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        raise ShapeError(f"{name} must be a 4D (C, T, H, W) array, got shape {np.shape(x)}", axis="ndim")


def _check_weight(weight, spec):
    if weight.shape != spec.weight_shape:
        for axis, got, want in zip(("out_channel", "in_channel") + AXES, weight.shape, spec.weight_shape):
            if got != want:
                raise ShapeError(f"weight {axis} extent {got} != spec {want}", axis=axis)
        raise ShapeError(f"weight shape {weight.shape} != {spec.weight_shape}", axis="ndim")


def _float_dtype(*arrays):
    dtype = np.result_type(*arrays)
    if dtype not in (np.float32, np.float64):
        dtype = np.dtype(np.float64)
    return dtype


def _prep(a, dtype):
    return np.ascontiguousarray(a, dtype=dtype)


def _pad(x, padding):
    if not any(padding):
        return x
    return np.pad(x, ((0, 0),) + tuple((p, p) for p in padding))


def _crop(buf, padding, extents):
    return buf[:, padding[0]:padding[0] + extents[0],
               padding[1]:padding[1] + extents[1],
               padding[2]:padding[2] + extents[2]]


def conv3d_forward(x, weight, bias, spec):
    """Convolve ``x`` (C_in, T, H, W) with ``weight`` (C_out, C_in, kt, kh, kw).

    ``bias`` may be None. Returns (C_out, T', H', W') with
    T' = floor((T + 2p - k) / s) + 1 per axis.
    """
    _check_tensor(x, "input")
    _check_weight(weight, spec)
    if x.shape[0] != spec.in_channels:
        raise ShapeError(f"input has {x.shape[0]} channels, spec expects {spec.in_channels}", axis="channel")
    spec.output_extents(x.shape[1:])
    dtype = _float_dtype(x, weight)
    xp = _pad(_prep(x, dtype), spec.padding)
    out = _backend.kernels().conv_forward(np.ascontiguousarray(xp), _prep(weight, dtype), spec.stride)
    if bias is not None:
        out += _prep(bias, dtype)[:, None, None, None]
    return out


def _check_grad_out(grad_out, spec, channels):
    _check_tensor(grad_out, "grad_out")
    if grad_out.shape[0] != channels:
        raise ShapeError(f"grad_out has {grad_out.shape[0]} channels, expected {channels}", axis="channel")


def conv3d_backward_data(grad_out, weight, spec, input_extents=None):
    """Gradient of ``conv3d_forward`` with respect to its input.

    ``input_extents`` (T, H, W) of the forward input is needed when a strided
    forward discarded trailing rows; by default the smallest consistent
    extents are assumed.
    """
    _check_weight(weight, spec)
    _check_grad_out(grad_out, spec, spec.out_channels)
    if input_extents is None:
        input_extents = spec.transposed_extents(grad_out.shape[1:])
    input_extents = tuple(int(n) for n in input_extents)
    if spec.output_extents(input_extents) != grad_out.shape[1:]:
        raise ShapeError(
            f"grad_out extents {grad_out.shape[1:]} inconsistent with input extents {input_extents}", axis="extent")
    dtype = _float_dtype(grad_out, weight)
    padded = tuple(
        max(n + 2 * p, (o - 1) * s + k)
        for n, p, o, s, k in zip(input_extents, spec.padding, grad_out.shape[1:], spec.stride, spec.kernel))
    buf = _backend.kernels().conv_backward_data(_prep(grad_out, dtype), _prep(weight, dtype), spec.stride, padded)
    return np.ascontiguousarray(_crop(buf, spec.padding, input_extents))


def conv3d_backward_weights(grad_out, x, spec, bias=True):
    """Gradients of ``conv3d_forward`` with respect to weight and bias.

    Returns ``(grad_weight, grad_bias)``; ``grad_bias`` is None when
    ``bias`` is False.
    """
    _check_tensor(x, "input")
    _check_grad_out(grad_out, spec, spec.out_channels)
    if x.shape[0] != spec.in_channels:
        raise ShapeError(f"input has {x.shape[0]} channels, spec expects {spec.in_channels}", axis="channel")
    if spec.output_extents(x.shape[1:]) != grad_out.shape[1:]:
        raise ShapeError(f"grad_out extents {grad_out.shape[1:]} do not match input {x.shape[1:]}", axis="extent")
    dtype = _float_dtype(grad_out, x)
    g = _prep(grad_out, dtype)
    xp = np.ascontiguousarray(_pad(_prep(x, dtype), spec.padding))
    gw = _backend.kernels().conv_backward_weights(g, xp, spec.stride, spec.kernel)
    gb = g.sum(axis=(1, 2, 3)) if bias else None
    return gw, gb


def conv3d_transposed_forward(x, weight, spec, bias=None, output_padding=(0, 0, 0)):
    """Transposed convolution: the adjoint of ``conv3d_forward`` under the same ``spec``.

    ``x`` has ``spec.out_channels`` channels and ``weight`` keeps the forward
    layout (C_out, C_in, kt, kh, kw), so the result has ``spec.in_channels``
    channels and extents (n - 1) * s - 2p + k + output_padding. Strided
    upsampling is the zero-interleaving kind.
    """
    output_padding = _triple(output_padding, "output_padding")
    if any(op >= s for op, s in zip(output_padding, spec.stride)):
        raise ValueError(f"output_padding {output_padding} must be smaller than stride {spec.stride}")
    _check_tensor(x, "input")
    extents = spec.transposed_extents(x.shape[1:], output_padding)
    out = conv3d_backward_data(x, weight, spec, extents)
    if bias is not None:
        out += np.asarray(bias, dtype=out.dtype)[:, None, None, None]
    return out


def conv3d_transposed_backward(grad_out, x, weight, spec, bias=True):
    """Gradients of ``conv3d_transposed_forward`` w.r.t. input, weight and bias."""
    grad_in = conv3d_forward(grad_out, weight, None, spec)
    # roles swap: the forward-conv "output" is our input x
    grad_w, _ = conv3d_backward_weights(x, grad_out, spec, bias=False)
    grad_b = np.ascontiguousarray(grad_out).sum(axis=(1, 2, 3)) if bias else None
    return grad_in, grad_w, grad_b
