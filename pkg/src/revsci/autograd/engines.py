"""Backpropagation engines specialized to :class:`~revsci.revnet.Network`.

``backward_naive`` keeps every intermediate activation from the forward pass.
``backward_reversible`` keeps only the feature-extraction and reconstruction
activations plus the output of the reversible stack, and rebuilds each block's
input from its output with the analytic inverse while walking backwards.
Both report gradients for every parameter and an activation-memory ledger.
"""
from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError, ShapeError
from ..numerics import leaky_relu, leaky_relu_grad
from ..revnet import EXTRACTOR_ACT, HEAD_ACT, _input_array, rev_stack_forward
from .ledger import ActivationLedger


@dataclass
class GradReport:
    grads: dict  # parameter name -> gradient, in Network.named_parameters() order
    loss: float


@dataclass
class MemReport:
    engine: str
    peak_activation_bytes: int
    stored_tensor_count: int


def mse_loss(xhat, x):
    """Mean squared error over all channels, frames and pixels."""
    xhat, x = np.asarray(xhat), np.asarray(x)
    if xhat.shape != x.shape:
        raise ShapeError(f"reconstruction shape {xhat.shape} != ground truth {x.shape}", axis="ndim")
    return float(np.mean((xhat - x) ** 2))


def mse_grad(xhat, x):
    return (xhat - x) * xhat.dtype.type(2.0 / xhat.size)


def _target(net, x_true):
    x_true = np.asarray(x_true, dtype=net.config.np_dtype)
    if not net.config.color and x_true.ndim == 3:
        x_true = x_true[None]
    return x_true


def _loss_and_grad(xhat, x_true):
    loss = mse_loss(xhat, x_true)
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss}")
    return loss, mse_grad(xhat, x_true)


def _stage_forward(layers, acts, x, slope, ledger, prefix, retain_input=True):
    """Run a plain conv stage, retaining every layer input and the stage output."""
    if retain_input:
        ledger.retain(f"{prefix}.in", x)
    saved = [x]
    for i, (conv, act) in enumerate(zip(layers, acts)):
        x = conv(x)
        if act:
            x = leaky_relu(x, slope)
        saved.append(ledger.retain(f"{prefix}.out{i}", x))
    return x, saved


def _stage_backward(layers, acts, saved, g, slope, ledger, prefix, grads, release_input, need_input_grad=True):
    for i in range(len(layers) - 1, -1, -1):
        if acts[i]:
            g = g * leaky_relu_grad(saved[i + 1], slope)
        ledger.release(f"{prefix}.out{i}")
        gx, gw, gb = layers[i].backward(saved[i], g, need_input_grad=need_input_grad or i > 0)
        grads[f"{prefix}.{i}.weight"] = gw
        if gb is not None:
            grads[f"{prefix}.{i}.bias"] = gb
        g = gx
    if release_input:
        ledger.release(f"{prefix}.in")
    return g


def _block_backward(block, index, y, dy, grads, ledger, x=None, hidden=None):
    """Backprop through one reversible block.

    With ``x``/``hidden`` from a stored forward pass they are used directly.
    Otherwise the block input is rebuilt group by group from the output ``y``
    (the inverse transformation) and each group function's hidden activation is
    recomputed once and reused for its local gradients. Returns
    ``(grad_input, rebuilt_input_or_None)``.
    """
    m = block.m
    ys = block.split(y)
    dys = block.split(dy)
    rebuild = hidden is None
    if rebuild:
        x = ledger.retain("rev.x", np.empty_like(y))
    xs = block.split(x)
    dx = [None] * m
    carry = None
    for i in range(m - 1, -1, -1):
        f = block.groups[i]
        g = dys[i] if carry is None else dys[i] + carry
        u = ys[i - 1] if i > 0 else xs[0]
        if rebuild:
            z = ledger.retain("rev.z", f.hidden(u))
            xs[m - 1 - i][...] = ys[i] - f.conv_b(z)
            if not np.isfinite(xs[m - 1 - i]).all():
                raise NumericalError(f"non-finite activation rebuilt in block {index}", block=index)
        else:
            z = hidden[i]
        gu, local = f.backward(u, z, g)
        if rebuild:
            ledger.release("rev.z")
        for suffix, arr in local:
            grads[f"blocks.{index}.group{i}.{suffix}"] = arr
        dx[m - 1 - i] = g
        if i > 0:
            carry = gu
        else:
            dx[0] = dx[0] + gu
    return np.concatenate(dx, axis=0), (x if rebuild else None)


def _ordered(net, grads):
    return {name: grads[name] for name, _ in net.named_parameters()}


def _check_prediction(net, xhat, x_true):
    if xhat.shape != x_true.shape:
        raise ShapeError(f"reconstruction shape {xhat.shape} != ground truth {x_true.shape}", axis="ndim")


def backward_naive(net, ce, x_true):
    """Reverse-mode gradients with every activation stored during the forward pass."""
    cfg, slope = net.config, net.config.slope
    ledger = ActivationLedger()
    grads = {}
    x_true = _target(net, x_true)

    h, ext_saved = _stage_forward(net.extractor, EXTRACTOR_ACT, _input_array(net, ce), slope, ledger, "extract")
    block_inputs, block_hidden = [], []
    for l, block in enumerate(net.blocks):
        block_inputs.append(h)
        xs = block.split(h)
        hidden, ys = [], []
        prev = xs[0]
        for i, f in enumerate(block.groups):
            z = ledger.retain(f"block{l}.z{i}", f.hidden(prev))
            hidden.append(z)
            prev = xs[block.m - 1 - i] + f.conv_b(z)
            ys.append(prev)
        h = ledger.retain(f"block{l}.out", np.concatenate(ys, axis=0))
        block_hidden.append(hidden)
    xhat, head_saved = _stage_forward(net.head, HEAD_ACT, h, slope, ledger, "head", retain_input=False)
    _check_prediction(net, xhat, x_true)

    loss, g = _loss_and_grad(xhat, x_true)
    g = _stage_backward(net.head, HEAD_ACT, head_saved, g, slope, ledger, "head", grads, release_input=False)
    for l in range(cfg.L - 1, -1, -1):
        y = head_saved[0] if l == cfg.L - 1 else block_inputs[l + 1]
        g, _ = _block_backward(net.blocks[l], l, y, g, grads, ledger,
                               x=block_inputs[l], hidden=block_hidden[l])
        for i in range(net.blocks[l].m):
            ledger.release(f"block{l}.z{i}")
        ledger.release(f"block{l}.out")
    _stage_backward(net.extractor, EXTRACTOR_ACT, ext_saved, g, slope, ledger, "extract", grads,
                    release_input=True, need_input_grad=False)

    mem = MemReport("naive", ledger.peak_bytes, ledger.peak_count)
    return GradReport(_ordered(net, grads), loss), mem


def backward_reversible(net, ce, x_true):
    """Gradients with O(1)-in-depth activation storage for the reversible stack."""
    cfg, slope = net.config, net.config.slope
    ledger = ActivationLedger()
    grads = {}
    x_true = _target(net, x_true)

    h, ext_saved = _stage_forward(net.extractor, EXTRACTOR_ACT, _input_array(net, ce), slope, ledger, "extract")
    y = ledger.retain("rev.y", rev_stack_forward(h, net.blocks))
    xhat, head_saved = _stage_forward(net.head, HEAD_ACT, y, slope, ledger, "head", retain_input=False)
    _check_prediction(net, xhat, x_true)

    loss, g = _loss_and_grad(xhat, x_true)
    g = _stage_backward(net.head, HEAD_ACT, head_saved, g, slope, ledger, "head", grads, release_input=False)
    del head_saved
    for l in range(cfg.L - 1, -1, -1):
        g, x = _block_backward(net.blocks[l], l, y, g, grads, ledger)
        ledger.release("rev.y")
        ledger.release("rev.x")
        y = ledger.retain("rev.y", x)
    ledger.release("rev.y")
    _stage_backward(net.extractor, EXTRACTOR_ACT, ext_saved, g, slope, ledger, "extract", grads,
                    release_input=True, need_input_grad=False)

    mem = MemReport("reversible", ledger.peak_bytes, ledger.peak_count)
    return GradReport(_ordered(net, grads), loss), mem


ENGINES = {"naive": backward_naive, "reversible": backward_reversible}


def get_engine(name):
    try:
        return ENGINES[name]
    except KeyError:
        raise ValueError(f"unknown engine {name!r}; choose from {sorted(ENGINES)}") from None
