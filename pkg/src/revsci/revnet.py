"""Reversible SCI network: 3D-CNN feature extraction, multi-group reversible blocks and a
reconstruction head.

Feature tensors are (channels, B, nx, ny). A reversible block splits the
channel axis into ``m`` equal groups h_1..h_m and computes

    y_1 = h_m     + F_1(h_1)
    y_i = h_{m-i+1} + F_i(y_{i-1})      i = 2..m

which is undone group by group in the reverse order, so block inputs never
have to be stored for backpropagation.
"""
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ShapeError
from .numerics import (
    DTYPES,
    ConvSpec,
    conv3d_backward_data,
    conv3d_backward_weights,
    conv3d_forward,
    conv3d_transposed_backward,
    conv3d_transposed_forward,
    leaky_relu,
    leaky_relu_grad,
)

# Post-activation flags per layer; the final head layer is linear.
EXTRACTOR_ACT = (True, True, True, True)
HEAD_ACT = (True, True, True, False)


@dataclass
class NetworkConfig:
    """Architecture description.

    ``c1`` feature channels split into ``m`` groups, ``L`` reversible blocks,
    ``B`` frames per measurement. ``hidden`` is the internal width of each
    group function (defaults to ``c1 // m``).
    """

    c1: int = 64
    m: int = 2
    L: int = 18
    B: int = 8
    color: bool = False
    dtype: str = "f32"
    seed: int = 0
    slope: float = 0.01
    bias: bool = True
    hidden: int = None

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("need at least m=2 groups")
        if self.c1 % self.m:
            raise ValueError(f"c1={self.c1} is not divisible into m={self.m} groups")
        if self.L < 1:
            raise ValueError("need at least one reversible block")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {sorted(DTYPES)}")
        if self.hidden is None:
            self.hidden = self.c1 // self.m

    @property
    def group_width(self):
        return self.c1 // self.m

    @property
    def np_dtype(self):
        return np.dtype(DTYPES[self.dtype])

    @property
    def in_channels(self):
        return 4 if self.color else 1

    @property
    def out_channels(self):
        return 3 if self.color else 1

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown NetworkConfig keys: {sorted(unknown)}")
        return cls(**data)


def preset(m, L, **overrides):
    """Reversible SCI network with ``m`` groups and ``L`` blocks (c1 = 64 unless overridden)."""
    return NetworkConfig(m=m, L=L, **overrides)


class Conv3d:
    """One convolution layer owning its weight and optional bias."""

    def __init__(self, spec, *, transposed=False, output_padding=(0, 0, 0), bias=True, dtype=np.float32):
        self.spec = spec
        self.transposed = transposed
        self.output_padding = tuple(output_padding)
        self.weight = np.zeros(spec.weight_shape, dtype=dtype)
        self.bias = np.zeros(spec.in_channels if transposed else spec.out_channels, dtype=dtype) if bias else None

    @property
    def fan_in(self):
        if self.transposed:
            return self.spec.out_channels * int(np.prod(self.spec.kernel)) / int(np.prod(self.spec.stride))
        return self.spec.in_channels * int(np.prod(self.spec.kernel))

    def parameters(self):
        yield "weight", self.weight
        if self.bias is not None:
            yield "bias", self.bias

    def __call__(self, x):
        if self.transposed:
            return conv3d_transposed_forward(x, self.weight, self.spec, self.bias, self.output_padding)
        return conv3d_forward(x, self.weight, self.bias, self.spec)

    def backward(self, x, grad_out, need_input_grad=True):
        """Return (grad_input or None, grad_weight, grad_bias or None)."""
        has_bias = self.bias is not None
        if self.transposed:
            gx, gw, gb = conv3d_transposed_backward(grad_out, x, self.weight, self.spec, has_bias)
            return (gx if need_input_grad else None), gw, gb
        gw, gb = conv3d_backward_weights(grad_out, x, self.spec, has_bias)
        gx = conv3d_backward_data(grad_out, self.weight, self.spec, x.shape[1:]) if need_input_grad else None
        return gx, gw, gb


class GroupFunction:
    """F_i: conv 3x3x3 -> LeakyReLU -> conv 3x3x3, width-preserving."""

    def __init__(self, width, hidden, slope, bias, dtype):
        self.slope = slope
        self.conv_a = Conv3d(ConvSpec.same(width, hidden, 3), bias=bias, dtype=dtype)
        self.conv_b = Conv3d(ConvSpec.same(hidden, width, 3), bias=bias, dtype=dtype)

    def parameters(self):
        for prefix, conv in (("conv0", self.conv_a), ("conv1", self.conv_b)):
            for name, p in conv.parameters():
                yield f"{prefix}.{name}", p

    def hidden(self, u):
        return leaky_relu(self.conv_a(u), self.slope)

    def __call__(self, u, signs=None):
        z = self.hidden(u)
        if signs is not None:
            signs.append(z > 0)
        return self.conv_b(z)

    def backward(self, u, z, grad_out):
        """Backprop through F given its input ``u`` and hidden activation ``z``.

        Returns (grad_u, [(suffix, grad), ...]).
        """
        gz, gwb, gbb = self.conv_b.backward(z, grad_out)
        gz *= leaky_relu_grad(z, self.slope)
        gu, gwa, gba = self.conv_a.backward(u, gz)
        grads = [("conv0.weight", gwa), ("conv1.weight", gwb)]
        if gba is not None:
            grads += [("conv0.bias", gba), ("conv1.bias", gbb)]
        return gu, grads


class RevBlock:
    def __init__(self, config):
        dt = config.np_dtype
        self.m = config.m
        self.groups = [
            GroupFunction(config.group_width, config.hidden, config.slope, config.bias, dt)
            for _ in range(config.m)
        ]

    def parameters(self):
        for i, f in enumerate(self.groups):
            for name, p in f.parameters():
                yield f"group{i}.{name}", p

    def split(self, h):
        if h.shape[0] % self.m:
            raise ShapeError(f"{h.shape[0]} channels do not split into {self.m} groups", axis="channel")
        return np.split(h, self.m, axis=0)

    def forward(self, h, signs=None):
        return rev_block_forward(h, self, signs)

    def inverse(self, h):
        return rev_block_inverse(h, self)


class Network:
    """Feature extractor (4 convs), ``L`` reversible blocks, reconstruction head (4 convs)."""

    def __init__(self, config, init="kaiming"):
        self.config = config
        c, dt, bias = config.c1, config.np_dtype, config.bias
        down = (1, 1, 1) if config.color else (1, 2, 2)
        self.extractor = [
            Conv3d(ConvSpec.same(config.in_channels, c, 5), bias=bias, dtype=dt),
            Conv3d(ConvSpec.same(c, c, 3), bias=bias, dtype=dt),
            Conv3d(ConvSpec.same(c, c, 1), bias=bias, dtype=dt),
            Conv3d(ConvSpec.same(c, c, 3, stride=down), bias=bias, dtype=dt),
        ]
        self.blocks = [RevBlock(config) for _ in range(config.L)]
        # the head always upsamples space by 2: grayscale undoes the strided
        # extractor, color goes from Bayer-site resolution to full resolution
        self.head = [
            Conv3d(ConvSpec.same(c, c, 3, stride=(1, 2, 2)), transposed=True, output_padding=(0, 1, 1),
                   bias=bias, dtype=dt),
            Conv3d(ConvSpec.same(c, c, 3), bias=bias, dtype=dt),
            Conv3d(ConvSpec.same(c, c, 1), bias=bias, dtype=dt),
            Conv3d(ConvSpec.same(c, config.out_channels, 3), bias=bias, dtype=dt),
        ]
        if init == "kaiming":
            initialize(self, config.seed)
        elif init != "zeros":
            raise ValueError(f"unknown init {init!r}")

    def named_parameters(self):
        """Stable (name, array) enumeration; arrays are the live parameters."""
        for i, conv in enumerate(self.extractor):
            for name, p in conv.parameters():
                yield f"extract.{i}.{name}", p
        for l, block in enumerate(self.blocks):
            for name, p in block.parameters():
                yield f"blocks.{l}.{name}", p
        for i, conv in enumerate(self.head):
            for name, p in conv.parameters():
                yield f"head.{i}.{name}", p

    def parameter_dict(self):
        return dict(self.named_parameters())

    def load_parameters(self, values):
        params = self.parameter_dict()
        if set(values) != set(params):
            missing = sorted(set(params) - set(values))
            extra = sorted(set(values) - set(params))
            raise ValueError(f"parameter mismatch; missing {missing[:3]}, unexpected {extra[:3]}")
        for name, p in params.items():
            v = np.asarray(values[name])
            if v.shape != p.shape:
                raise ShapeError(f"{name}: shape {v.shape} != {p.shape}", axis=name)
            p[...] = v

    def copy(self):
        other = Network(self.config, init="zeros")
        other.load_parameters(self.parameter_dict())
        return other

    def __call__(self, x, signs=None):
        return forward(self, x, signs)


def _leaky_gain(slope):
    return np.sqrt(2.0 / (1.0 + slope ** 2))


def initialize(net, seed):
    """Kaiming fan-in init with LeakyReLU gain; biases start at zero.

    The second conv of every group function is further scaled by 1/sqrt(L) so
    the additive couplings do not compound activation variance over deep
    stacks. Values are drawn in float64 in parameter order, so both dtypes get
    the same initial network.
    """
    cfg = net.config
    rng = np.random.default_rng(seed)
    gain = _leaky_gain(cfg.slope)

    def fill(conv, g):
        conv.weight[...] = rng.standard_normal(conv.weight.shape) * (g / np.sqrt(conv.fan_in))

    for conv in net.extractor:
        fill(conv, gain)
    for block in net.blocks:
        for f in block.groups:
            fill(f.conv_a, gain)
            fill(f.conv_b, 1.0 / np.sqrt(cfg.L))
    for conv, act in zip(net.head, HEAD_ACT):
        fill(conv, gain if act else 1.0)


def count_parameters(net):
    return int(sum(p.size for _, p in net.named_parameters()))


def block_parameter_formula(c1, m, hidden=None):
    """Closed-form parameter count of one reversible block (3x3x3 convs with bias)."""
    w = c1 // m
    hidden = w if hidden is None else hidden
    return m * (27 * w * hidden + hidden + 27 * hidden * w + w)


def _input_array(net, x):
    x = getattr(x, "network_input", x)
    x = np.asarray(x, dtype=net.config.np_dtype)
    cfg = net.config
    if x.ndim != 4 or x.shape[0] != cfg.in_channels:
        raise ShapeError(f"expected ({cfg.in_channels}, B, nx, ny) input, got {x.shape}", axis="channel")
    if not cfg.color and (x.shape[2] % 2 or x.shape[3] % 2):
        raise ShapeError(f"grayscale frames need even extents, got {x.shape[2:]}", axis="height")
    return np.ascontiguousarray(x)


def _run_layers(layers, acts, x, slope, signs=None):
    for conv, act in zip(layers, acts):
        x = conv(x)
        if act:
            if signs is not None:
                signs.append(x > 0)
            x = leaky_relu(x, slope)
    return x


def feature_extract(net, x, signs=None):
    """(1, B, nx, ny) -> (c1, B, nx/2, ny/2); color (4, B, nx/2, ny/2) -> (c1, B, nx/2, ny/2)."""
    return _run_layers(net.extractor, EXTRACTOR_ACT, _input_array(net, x), net.config.slope, signs)


def rev_block_forward(h, block, signs=None):
    xs = block.split(h)
    m = block.m
    ys = []
    prev = xs[0]
    for i, f in enumerate(block.groups):
        prev = xs[m - 1 - i] + f(prev, signs)
        ys.append(prev)
    return np.concatenate(ys, axis=0)


def rev_block_inverse(h, block):
    ys = block.split(h)
    m = block.m
    xs = [None] * m
    for i in range(m - 1, 0, -1):
        xs[m - 1 - i] = ys[i] - block.groups[i](ys[i - 1])
    xs[m - 1] = ys[0] - block.groups[0](xs[0])
    return np.concatenate(xs, axis=0)


def rev_stack_forward(h, blocks, signs=None):
    for block in blocks:
        h = rev_block_forward(h, block, signs)
    return h


def rev_stack_inverse(h, blocks):
    for block in reversed(blocks):
        h = rev_block_inverse(h, block)
    return h


def reconstruct_head(net, h, signs=None):
    """(c1, B, n/2, n/2) features -> (1 or 3, B, n, n) video."""
    if h.shape[0] != net.config.c1:
        raise ShapeError(f"head expects {net.config.c1} channels, got {h.shape[0]}", axis="channel")
    return _run_layers(net.head, HEAD_ACT, h, net.config.slope, signs)


def forward(net, x, signs=None):
    """Full reconstruction. ``signs``, if a list, collects every LeakyReLU sign pattern."""
    h = feature_extract(net, x, signs)
    h = rev_stack_forward(h, net.blocks, signs)
    return reconstruct_head(net, h, signs)


def predict(net, x):
    """Forward pass returning (B, nx, ny) for grayscale, (3, B, nx, ny) for color."""
    out = forward(net, x)
    return out if net.config.color else out[0]
