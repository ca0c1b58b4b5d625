# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Direct 3D convolution kernels with register-tiled C microkernels.

All kernels work on pre-padded inputs. The forward pass computes output tiles
of 4 channels by 16 contiguous width positions, accumulating over every
(input channel, kt, kh, kw) tap in a fixed order, so results are
bit-reproducible for identical inputs. Tap positions are precomputed as flat
offsets, so the microkernel only streams contiguous rows.

A width stride ``sw > 1`` is handled by splitting the padded width axis into
``sw`` phases (columns ``p, p + sw, ...``): tap ``kw`` of output column ``j``
reads phase ``kw % sw`` at position ``j + kw // sw``, again contiguous. The
data gradient is one stride-1 correlation per stride phase of the input with
the matching flipped sub-kernel.
"""
import itertools

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef extern from *:
    """
    #include <string.h>
    #include <stddef.h>

    /* 32-byte vectors; GCC lowers them to whatever the target offers */
    typedef float rv_vf __attribute__((vector_size(32)));
    typedef double rv_vd __attribute__((vector_size(32)));

    /* out[c*16 + j] = sum_k w[k*nc + c] * x[off[k] + j], for c < nc (1 or 4) and j < 16 */
    static void rv_fwd_f(const float *x, const ptrdiff_t *off, const float *w,
                         ptrdiff_t ntaps, int nc, float *out) {
        rv_vf a[4][2];
        memset(a, 0, sizeof a);
        if (nc == 4) {
            for (ptrdiff_t k = 0; k < ntaps; k++) {
                const float *xr = x + off[k];
                const float *wk = w + 4 * k;
                rv_vf x0, x1;
                memcpy(&x0, xr, sizeof x0);
                memcpy(&x1, xr + 8, sizeof x1);
                for (int c = 0; c < 4; c++) {
                    a[c][0] += wk[c] * x0;
                    a[c][1] += wk[c] * x1;
                }
            }
        } else {
            for (ptrdiff_t k = 0; k < ntaps; k++) {
                const float *xr = x + off[k];
                rv_vf x0, x1;
                memcpy(&x0, xr, sizeof x0);
                memcpy(&x1, xr + 8, sizeof x1);
                a[0][0] += w[k] * x0;
                a[0][1] += w[k] * x1;
            }
        }
        memcpy(out, a, sizeof(float) * 16 * nc);
    }

    static void rv_fwd_d(const double *x, const ptrdiff_t *off, const double *w,
                         ptrdiff_t ntaps, int nc, double *out) {
        rv_vd a[4][4];
        memset(a, 0, sizeof a);
        if (nc == 4) {
            for (ptrdiff_t k = 0; k < ntaps; k++) {
                const double *xr = x + off[k];
                const double *wk = w + 4 * k;
                rv_vd x0, x1, x2, x3;
                memcpy(&x0, xr, sizeof x0);
                memcpy(&x1, xr + 4, sizeof x1);
                memcpy(&x2, xr + 8, sizeof x2);
                memcpy(&x3, xr + 12, sizeof x3);
                for (int c = 0; c < 4; c++) {
                    a[c][0] += wk[c] * x0;
                    a[c][1] += wk[c] * x1;
                    a[c][2] += wk[c] * x2;
                    a[c][3] += wk[c] * x3;
                }
            }
        } else {
            for (ptrdiff_t k = 0; k < ntaps; k++) {
                const double *xr = x + off[k];
                rv_vd x0, x1, x2, x3;
                memcpy(&x0, xr, sizeof x0);
                memcpy(&x1, xr + 4, sizeof x1);
                memcpy(&x2, xr + 8, sizeof x2);
                memcpy(&x3, xr + 12, sizeof x3);
                a[0][0] += w[k] * x0;
                a[0][1] += w[k] * x1;
                a[0][2] += w[k] * x2;
                a[0][3] += w[k] * x3;
            }
        }
        memcpy(out, a, sizeof(double) * 16 * nc);
    }

    /* Three taps at once: out[3*c + t] = sum over positions p and lanes j < 16 of
       g[c*gs + pg[p] + j] * x[toff[t] + px[p] + j], for c < 4 and t < 3 */
    static void rv_wgt_f(const float *g, ptrdiff_t gs, const float *x, const ptrdiff_t *toff,
                         const ptrdiff_t *pg, const ptrdiff_t *px, ptrdiff_t npos, float *out) {
        rv_vf a[4][3];
        memset(a, 0, sizeof a);
        for (ptrdiff_t p = 0; p < npos; p++) {
            for (int v = 0; v < 16; v += 8) {
                const float *gb = g + pg[p] + v;
                const float *xb = x + px[p] + v;
                rv_vf x0, x1, x2;
                memcpy(&x0, xb + toff[0], sizeof x0);
                memcpy(&x1, xb + toff[1], sizeof x1);
                memcpy(&x2, xb + toff[2], sizeof x2);
                for (int c = 0; c < 4; c++) {
                    rv_vf gc;
                    memcpy(&gc, gb + c * gs, sizeof gc);
                    a[c][0] += gc * x0;
                    a[c][1] += gc * x1;
                    a[c][2] += gc * x2;
                }
            }
        }
        for (int c = 0; c < 4; c++)
            for (int t = 0; t < 3; t++) {
                float s = 0;
                for (int j = 0; j < 8; j++)
                    s += a[c][t][j];
                out[3 * c + t] = s;
            }
    }

    static void rv_wgt_d(const double *g, ptrdiff_t gs, const double *x, const ptrdiff_t *toff,
                         const ptrdiff_t *pg, const ptrdiff_t *px, ptrdiff_t npos, double *out) {
        rv_vd a[4][3];
        memset(a, 0, sizeof a);
        for (ptrdiff_t p = 0; p < npos; p++) {
            for (int v = 0; v < 16; v += 4) {
                const double *gb = g + pg[p] + v;
                const double *xb = x + px[p] + v;
                rv_vd x0, x1, x2;
                memcpy(&x0, xb + toff[0], sizeof x0);
                memcpy(&x1, xb + toff[1], sizeof x1);
                memcpy(&x2, xb + toff[2], sizeof x2);
                for (int c = 0; c < 4; c++) {
                    rv_vd gc;
                    memcpy(&gc, gb + c * gs, sizeof gc);
                    a[c][0] += gc * x0;
                    a[c][1] += gc * x1;
                    a[c][2] += gc * x2;
                }
            }
        }
        for (int c = 0; c < 4; c++)
            for (int t = 0; t < 3; t++) {
                double s = 0;
                for (int j = 0; j < 4; j++)
                    s += a[c][t][j];
                out[3 * c + t] = s;
            }
    }
    """
    void rv_fwd_f(const float *x, const Py_ssize_t *off, const float *w, Py_ssize_t ntaps, int nc,
                  float *out) nogil
    void rv_fwd_d(const double *x, const Py_ssize_t *off, const double *w, Py_ssize_t ntaps, int nc,
                  double *out) nogil
    void rv_wgt_f(const float *g, Py_ssize_t gs, const float *x, const Py_ssize_t *toff,
                  const Py_ssize_t *pg, const Py_ssize_t *px, Py_ssize_t npos, float *out) nogil
    void rv_wgt_d(const double *g, Py_ssize_t gs, const double *x, const Py_ssize_t *toff,
                  const Py_ssize_t *pg, const Py_ssize_t *px, Py_ssize_t npos, double *out) nogil

cdef enum:
    CB = 4   # output channels per tile
    JB = 16  # width positions per tile


def _split_phases(xp, sw, tail):
    """(C, T, H, W) -> (C, T, H, sw, ceil(W / sw) + tail), zero-filled past the end."""
    wq = (xp.shape[3] + sw - 1) // sw
    xq = np.zeros(xp.shape[:3] + (sw, wq + tail), dtype=xp.dtype)
    for p in range(sw):
        seg = xp[:, :, :, p::sw]
        xq[:, :, :, p, :seg.shape[3]] = seg
    return xq


def _tap_offsets(xq, kernel, sw):
    """Flat offset of every (ci, kt, kh, kw) tap, in that order, into the phase-split input."""
    sc, stt, sh, sp = (s // xq.itemsize for s in xq.strides[:4])
    ci = np.arange(xq.shape[0])[:, None, None, None]
    kt = np.arange(kernel[0])[None, :, None, None]
    kh = np.arange(kernel[1])[None, None, :, None]
    kw = np.arange(kernel[2])[None, None, None, :]
    off = ci * sc + kt * stt + kh * sh + (kw % sw) * sp + kw // sw
    return np.ascontiguousarray(off.reshape(-1), dtype=np.intp)


def _pointwise(w, stride):
    """True for a 1x1x1 stride-1 kernel, which is a plain matrix product handed to BLAS."""
    return w.shape[2:] == (1, 1, 1) and tuple(stride) == (1, 1, 1)


def conv_forward(xp, w, tuple stride):
    """Correlate the padded input ``xp`` (Ci, Tp, Hp, Wp) with ``w`` (Co, Ci, kt, kh, kw)."""
    if _pointwise(w, stride):
        w2 = np.asarray(w, dtype=xp.dtype).reshape(w.shape[:2])
        return (w2 @ xp.reshape(xp.shape[0], -1)).reshape((w.shape[0],) + xp.shape[1:])
    cdef Py_ssize_t st = stride[0], sh = stride[1], sw = stride[2]
    xp = np.ascontiguousarray(xp)
    w = np.ascontiguousarray(w, dtype=xp.dtype)
    cdef bint single = xp.dtype == np.float32
    cdef Py_ssize_t Co = w.shape[0], K = w[0].size
    kernel = w.shape[2:]
    cdef Py_ssize_t To = (xp.shape[1] - kernel[0]) // st + 1
    cdef Py_ssize_t Ho = (xp.shape[2] - kernel[1]) // sh + 1
    cdef Py_ssize_t Wo = (xp.shape[3] - kernel[2]) // sw + 1
    cdef Py_ssize_t nfull = Co // CB
    cdef Py_ssize_t ntiles = nfull + Co % CB
    cdef Py_ssize_t nj = (Wo + JB - 1) // JB

    xq = _split_phases(xp, sw, JB)
    cdef Py_ssize_t[::1] off = _tap_offsets(xq, kernel, sw)
    cdef Py_ssize_t sT = xq.strides[1] // xq.itemsize, sH = xq.strides[2] // xq.itemsize
    # full channel tiles interleave their weights per tap; leftover channels run one at a time
    wflat = w.reshape(Co, K)
    wt = np.concatenate([wflat[:nfull * CB].reshape(nfull, CB, K).transpose(0, 2, 1).reshape(-1),
                         wflat[nfull * CB:].reshape(-1)])
    out_arr = np.empty((Co, To, Ho, nj * JB), dtype=xp.dtype)
    tile_arr = np.empty(CB * JB, dtype=xp.dtype)

    cdef char* xbase = cnp.PyArray_BYTES(xq)
    cdef char* wbase = cnp.PyArray_BYTES(wt)
    cdef char* obase = cnp.PyArray_BYTES(out_arr)
    cdef char* tbase = cnp.PyArray_BYTES(tile_arr)
    cdef Py_ssize_t ocs = To * Ho * nj * JB
    cdef Py_ssize_t tile, c0, nc, t, h, jt, c, j, xo, oo, wo

    with nogil:
        for tile in range(ntiles):
            if tile < nfull:
                c0 = tile * CB
                nc = CB
                wo = tile * K * CB
            else:
                c0 = nfull * CB + (tile - nfull)
                nc = 1
                wo = nfull * K * CB + (tile - nfull) * K
            for t in range(To):
                for h in range(Ho):
                    for jt in range(nj):
                        xo = t * st * sT + h * sh * sH + jt * JB
                        oo = c0 * ocs + (t * Ho + h) * nj * JB + jt * JB
                        if single:
                            rv_fwd_f(<float*>xbase + xo, &off[0], <float*>wbase + wo, K, nc, <float*>tbase)
                            for c in range(nc):
                                for j in range(JB):
                                    (<float*>obase)[oo + c * ocs + j] = (<float*>tbase)[c * JB + j]
                        else:
                            rv_fwd_d(<double*>xbase + xo, &off[0], <double*>wbase + wo, K, nc, <double*>tbase)
                            for c in range(nc):
                                for j in range(JB):
                                    (<double*>obase)[oo + c * ocs + j] = (<double*>tbase)[c * JB + j]
    return np.ascontiguousarray(out_arr[..., :Wo])


def conv_backward_data(g, w, tuple stride, tuple padded_shape):
    """Input gradient (Ci, Tp, Hp, Wp) of a strided correlation, given ``g`` (Co, To, Ho, Wo).

    Input position ``p + s * q`` along an axis with stride ``s`` only meets
    taps ``k = p + s * u``; for each phase ``p`` this is a full correlation of
    ``g`` with the flipped sub-kernel ``w[..., p::s]``.
    """
    g = np.asarray(g)
    if _pointwise(w, stride):
        w2 = np.asarray(w, dtype=g.dtype).reshape(w.shape[:2])
        return (w2.T @ g.reshape(g.shape[0], -1)).reshape((w.shape[1],) + g.shape[1:])
    gin = np.zeros((w.shape[1],) + tuple(padded_shape), dtype=g.dtype)
    wt = np.asarray(w).transpose(1, 0, 2, 3, 4)
    for phase in itertools.product(*(range(s) for s in stride)):
        sub = wt[:, :, phase[0]::stride[0], phase[1]::stride[1], phase[2]::stride[2]]
        if 0 in sub.shape[2:]:
            continue  # kernel narrower than the stride: these inputs are never read
        counts = [(n - p + s - 1) // s for n, p, s in zip(padded_shape, phase, stride)]
        pads = [(u - 1, max(0, q - o)) for u, q, o in zip(sub.shape[2:], counts, g.shape[1:])]
        res = conv_forward(np.pad(g, [(0, 0)] + pads), sub[:, :, ::-1, ::-1, ::-1], (1, 1, 1))
        gin[:, phase[0]::stride[0], phase[1]::stride[1], phase[2]::stride[2]] = \
            res[:, :counts[0], :counts[1], :counts[2]]
    return gin


def conv_backward_weights(g, xp, tuple stride, tuple kernel):
    """Weight gradient: correlate ``g`` with the padded forward input ``xp``.

    Partial sums are kept per (output channel, tap, width lane) in registers,
    three taps at a time, and reduced in a fixed order.
    """
    if tuple(kernel) == (1, 1, 1) and tuple(stride) == (1, 1, 1):
        g2 = np.asarray(g, dtype=xp.dtype).reshape(g.shape[0], -1)
        return (g2 @ np.asarray(xp).reshape(xp.shape[0], -1).T).reshape(g.shape[:1] + xp.shape[:1] + (1, 1, 1))
    cdef Py_ssize_t st = stride[0], sh = stride[1], sw = stride[2]
    xp = np.ascontiguousarray(xp)
    g = np.asarray(g, dtype=xp.dtype)
    cdef bint single = xp.dtype == np.float32
    cdef Py_ssize_t Co = g.shape[0], Ci = xp.shape[0]
    cdef Py_ssize_t To = g.shape[1], Ho = g.shape[2], Wo = g.shape[3]
    cdef Py_ssize_t nb = (Co + CB - 1) // CB
    cdef Py_ssize_t nj = (Wo + JB - 1) // JB
    cdef Py_ssize_t Wg = nj * JB
    # zero-pad channels to whole tiles and width to whole lanes; padded entries contribute 0
    gp = np.zeros((nb * CB, To, Ho, Wg), dtype=xp.dtype)
    gp[:Co, :, :, :Wo] = g
    xq = _split_phases(xp, sw, Wg)
    taps = _tap_offsets(xq, kernel, sw)
    cdef Py_ssize_t K = taps.shape[0]
    cdef Py_ssize_t ntb = (K + 2) // 3
    # taps in groups of three; the last group repeats its final tap and the duplicates are dropped
    cdef Py_ssize_t[::1] off = np.concatenate([taps, np.repeat(taps[-1:], 3 * ntb - K)])
    sT, sH = xq.strides[1] // xq.itemsize, xq.strides[2] // xq.itemsize
    t_, h_, j_ = np.meshgrid(np.arange(To), np.arange(Ho), np.arange(nj) * JB, indexing="ij")
    cdef Py_ssize_t[::1] pg = np.ascontiguousarray(((t_ * Ho + h_) * Wg + j_).reshape(-1), dtype=np.intp)
    cdef Py_ssize_t[::1] px = np.ascontiguousarray((t_ * st * sT + h_ * sh * sH + j_).reshape(-1), dtype=np.intp)
    cdef Py_ssize_t npos = pg.shape[0]
    gw_arr = np.empty((nb * CB, 3 * ntb), dtype=xp.dtype)
    tile_arr = np.empty(3 * CB, dtype=xp.dtype)

    cdef char* gbase = cnp.PyArray_BYTES(gp)
    cdef char* xbase = cnp.PyArray_BYTES(xq)
    cdef char* wbase = cnp.PyArray_BYTES(gw_arr)
    cdef char* tbase = cnp.PyArray_BYTES(tile_arr)
    cdef Py_ssize_t gcs = To * Ho * Wg
    cdef Py_ssize_t cb, kb, c, t, row

    with nogil:
        for cb in range(nb):
            for kb in range(ntb):
                if single:
                    rv_wgt_f(<float*>gbase + cb * CB * gcs, gcs, <float*>xbase, &off[3 * kb],
                             &pg[0], &px[0], npos, <float*>tbase)
                else:
                    rv_wgt_d(<double*>gbase + cb * CB * gcs, gcs, <double*>xbase, &off[3 * kb],
                             &pg[0], &px[0], npos, <double*>tbase)
                for c in range(CB):
                    row = (cb * CB + c) * 3 * ntb + 3 * kb
                    for t in range(3):
                        if single:
                            (<float*>wbase)[row + t] = (<float*>tbase)[3 * c + t]
                        else:
                            (<double*>wbase)[row + t] = (<double*>tbase)[3 * c + t]
    gw_arr = gw_arr[:, :K]
    return gw_arr[:Co].reshape((Co, Ci) + tuple(kernel))
