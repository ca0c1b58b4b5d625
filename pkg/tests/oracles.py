"""Slow reference implementations used as independent test oracles."""
import numpy as np


def conv3d_loops(x, w, b, stride, padding):
    """Direct nested-loop 3D cross-correlation with zero padding."""
    ci, t, h, wd = x.shape
    co, _, kt, kh, kw = w.shape
    st, sh, sw = stride
    pt, ph, pw = padding
    to = (t + 2 * pt - kt) // st + 1
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    out = np.zeros((co, to, ho, wo))
    for o in range(co):
        for i in range(to):
            for j in range(ho):
                for k in range(wo):
                    acc = 0.0 if b is None else float(b[o])
                    for c in range(ci):
                        for a in range(kt):
                            for bb in range(kh):
                                for cc in range(kw):
                                    ti = i * st + a - pt
                                    hi = j * sh + bb - ph
                                    wi = k * sw + cc - pw
                                    if 0 <= ti < t and 0 <= hi < h and 0 <= wi < wd:
                                        acc += w[o, c, a, bb, cc] * x[c, ti, hi, wi]
                    out[o, i, j, k] = acc
    return out


def central_difference(f, x, step):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return grad
