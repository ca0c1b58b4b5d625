"""Pure numpy implementations of the convolution kernels (im2col + GEMM).

Same contracts as the compiled ``_kernels`` module: inputs are pre-padded,
C-contiguous and share one float dtype.
"""
import itertools

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _columns(xp, kernel, stride):
    kt, kh, kw = kernel
    st, sh, sw = stride
    win = sliding_window_view(xp, (kt, kh, kw), axis=(1, 2, 3))[:, ::st, ::sh, ::sw]
    to, ho, wo = win.shape[1:4]
    # (Ci, To, Ho, Wo, kt, kh, kw) -> (Ci*kt*kh*kw, To*Ho*Wo); reshape copies
    cols = win.transpose(0, 4, 5, 6, 1, 2, 3).reshape(-1, to * ho * wo)
    return cols, (to, ho, wo)


def conv_forward(xp, w, stride):
    co = w.shape[0]
    cols, extents = _columns(xp, w.shape[2:], stride)
    return (w.reshape(co, -1) @ cols).reshape((co,) + extents)


def conv_backward_data(g, w, stride, padded_shape):
    co, ci, kt, kh, kw = w.shape
    to, ho, wo = g.shape[1:]
    st, sh, sw = stride
    cols = (w.reshape(co, -1).T @ g.reshape(co, -1)).reshape(ci, kt, kh, kw, to, ho, wo)
    gin = np.zeros((ci,) + tuple(padded_shape), dtype=g.dtype)
    for a, b, c in itertools.product(range(kt), range(kh), range(kw)):
        gin[:, a:a + st * to:st, b:b + sh * ho:sh, c:c + sw * wo:sw] += cols[:, a, b, c]
    return gin


def conv_backward_weights(g, xp, stride, kernel):
    co = g.shape[0]
    cols, _ = _columns(xp, kernel, stride)
    gw = g.reshape(co, -1) @ cols.T
    return gw.reshape((co, xp.shape[0]) + tuple(kernel))
