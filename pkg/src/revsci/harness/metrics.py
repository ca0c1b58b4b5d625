"""PSNR and SSIM over videos of shape (B, nx, ny) or (C, B, nx, ny)."""
import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import ShapeError

PSNR_CAP = 99.0
SSIM_K1, SSIM_K2 = 0.01, 0.03
SSIM_SIGMA = 1.5
SSIM_WINDOW = 11


def _pair(xhat, x):
    xhat = np.asarray(xhat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if xhat.shape != x.shape:
        raise ShapeError(f"shape mismatch {xhat.shape} vs {x.shape}", axis="ndim")
    return xhat, x


def psnr(xhat, x, peak=1.0):
    """``10 log10(peak^2 / MSE)`` in dB, capped at 99 dB for a perfect match."""
    xhat, x = _pair(xhat, x)
    mse = float(np.mean((xhat - x) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, float(10.0 * np.log10(peak ** 2 / mse)))


def _blur(img):
    # truncate chosen so the kernel spans exactly SSIM_WINDOW taps
    return gaussian_filter(img, SSIM_SIGMA, truncate=((SSIM_WINDOW - 1) / 2) / SSIM_SIGMA)


def ssim_frame(a, b, data_range=1.0):
    """Mean SSIM of two 2D images over the window-valid interior."""
    pad = (SSIM_WINDOW - 1) // 2
    if min(a.shape) < SSIM_WINDOW:
        raise ShapeError(f"frames must be at least {SSIM_WINDOW} pixels, got {a.shape}", axis="frame")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = _blur(a), _blur(b)
    var_a = _blur(a * a) - mu_a * mu_a
    var_b = _blur(b * b) - mu_b * mu_b
    cov = _blur(a * b) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(s[pad:-pad, pad:-pad].mean())


def ssim(xhat, x, data_range=1.0):
    """Gaussian-window SSIM averaged over every frame (and channel)."""
    xhat, x = _pair(xhat, x)
    if xhat.ndim < 2:
        raise ShapeError(f"need at least 2D input, got {xhat.shape}", axis="ndim")
    a = xhat.reshape(-1, *xhat.shape[-2:])
    b = x.reshape(-1, *x.shape[-2:])
    return float(np.mean([ssim_frame(p, q, data_range) for p, q in zip(a, b)]))
