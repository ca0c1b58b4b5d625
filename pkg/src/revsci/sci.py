"""Snapshot compressive imaging camera simulator.

A scene of ``B`` frames (B, nx, ny) is modulated frame-by-frame with binary
masks and integrated into one snapshot ``Y = sum_k X_k * C_k + G``. The
coarse estimate that feeds the network divides ``Y`` by the per-pixel mask
sum and re-applies each mask.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import CoverageError, ShapeError

GUARD_EPS = 1e-8


class MaskScheme(str, Enum):
    BERNOULLI = "bernoulli"
    SHIFTING = "shifting"
    ALL_ONES = "all_ones"


class BayerPattern(str, Enum):
    RGGB = "RGGB"


# (row offset, col offset) of each Bayer site, channel order R, G1, G2, B
BAYER_SITES = {BayerPattern.RGGB: ((0, 0), (0, 1), (1, 0), (1, 1))}
# which RGB plane each site samples
_SITE_COLOR = (0, 1, 1, 2)


@dataclass
class MaskSet:
    masks: np.ndarray  # (B, nx, ny), entries 0 or 1
    scheme: MaskScheme
    seed: int

    @property
    def B(self):
        return self.masks.shape[0]

    @property
    def frame_shape(self):
        return self.masks.shape[1:]

    def coverage(self):
        return self.masks.sum(axis=0)

    def astype(self, dtype):
        return MaskSet(self.masks.astype(dtype), self.scheme, self.seed)


@dataclass
class Measurement:
    y: np.ndarray  # (nx, ny)
    color: bool = False
    noise_sigma: float = 0.0


@dataclass
class CoarseEstimate:
    """Network input: (B, nx, ny) grayscale or (4, B, nx/2, ny/2) in R, G1, G2, B order."""

    frames: np.ndarray
    y_norm: np.ndarray
    color: bool = False

    @property
    def network_input(self):
        return self.frames if self.color else self.frames[None]


@dataclass
class SensingMatrix:
    """Block-diagonal-structured sensing matrix ``[D_1, ..., D_B]``.

    Only the diagonals are stored, one row per frame, each the column-major
    vectorization of that frame's mask.
    """

    diagonals: np.ndarray  # (B, n)
    frame_shape: tuple = field(default=())

    @property
    def shape(self):
        b, n = self.diagonals.shape
        return (n, n * b)

    @property
    def nnz(self):
        return int(np.count_nonzero(self.diagonals))

    def matvec(self, x):
        b, n = self.diagonals.shape
        return (self.diagonals * np.asarray(x).reshape(b, n)).sum(axis=0)

    def rmatvec(self, y):
        return (self.diagonals * np.asarray(y)[None, :]).reshape(-1)

    def to_dense(self):
        return np.hstack([np.diag(d) for d in self.diagonals])


def vectorize_video(video):
    """Stack column-major vectorized frames: x = [vec(X_1); ...; vec(X_B)]."""
    return np.concatenate([np.asarray(frame).reshape(-1, order="F") for frame in video])


def unvectorize_image(vec, frame_shape):
    return np.asarray(vec).reshape(frame_shape, order="F")


def generate_masks(B, nx, ny, scheme="shifting", seed=0, *, dtype=np.float64,
                   require_coverage=True, max_retries=100):
    """Draw ``B`` binary masks of size (nx, ny).

    ``shifting`` masks are one Bernoulli(0.5) pattern circularly shifted down by
    k rows for frame k. When ``require_coverage`` is set, draws are repeated
    until every pixel is exposed in at least one frame.
    """
    scheme = MaskScheme(scheme)
    if B < 1:
        raise ValueError("B must be >= 1")
    if scheme is MaskScheme.SHIFTING and B > nx:
        raise ValueError(f"shifting masks need B <= nx, got B={B}, nx={nx}")
    if scheme is MaskScheme.ALL_ONES:
        return MaskSet(np.ones((B, nx, ny), dtype=dtype), scheme, seed)

    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        if scheme is MaskScheme.BERNOULLI:
            masks = rng.integers(0, 2, size=(B, nx, ny))
        else:
            base = rng.integers(0, 2, size=(nx, ny))
            masks = np.stack([np.roll(base, k, axis=0) for k in range(B)])
        if not require_coverage or masks.sum(axis=0).min() > 0:
            return MaskSet(masks.astype(dtype), scheme, seed)
    raise CoverageError(
        f"no {scheme.value} draw with full pixel coverage after {max_retries} tries "
        f"(B={B}, {nx}x{ny}); disable require_coverage and use the division guard")


def _check_video(video, masks):
    if video.shape != masks.masks.shape:
        for axis, got, want in zip(("frame", "x", "y"), video.shape, masks.masks.shape):
            if got != want:
                raise ShapeError(f"video {axis} extent {got} != mask {want}", axis=axis)
        raise ShapeError(f"video shape {video.shape} != mask shape {masks.masks.shape}", axis="ndim")


def capture(video, masks, noise_sigma=0.0, seed=None, *, color=False):
    """Simulate one snapshot: sum of mask-modulated frames plus Gaussian noise."""
    video = np.asarray(video)
    _check_video(video, masks)
    m = masks.masks.astype(video.dtype, copy=False)
    y = (video * m).sum(axis=0)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        y = y + rng.normal(0.0, noise_sigma, size=y.shape).astype(y.dtype)
    return Measurement(y, color=color, noise_sigma=float(noise_sigma))


def flatten_sensing(masks):
    diagonals = np.stack([vectorize_video(frame[None]) for frame in masks.masks])
    return SensingMatrix(diagonals, tuple(masks.frame_shape))


def _normalizer(y, coverage, guard, eps):
    zero = coverage == 0
    if zero.any():
        if not guard:
            pixel = tuple(int(i) for i in np.argwhere(zero)[0])
            raise CoverageError(f"pixel {pixel} is not covered by any mask", pixel=pixel)
        coverage = np.where(zero, eps, coverage)
    return y / coverage


def coarse_estimate(measurement, masks, *, guard=False, eps=GUARD_EPS):
    """Grayscale coarse estimate ``X_CE[k] = (Y / sum_k C_k) * C_k``.

    Uncovered pixels raise :class:`CoverageError` unless ``guard`` is set, in
    which case their denominator becomes ``eps``.
    """
    if measurement.color:
        raise ValueError("color measurement; use split_bayer_estimate")
    y = measurement.y
    if y.shape != masks.frame_shape:
        raise ShapeError(f"measurement shape {y.shape} != mask frame {masks.frame_shape}", axis="frame")
    m = masks.masks.astype(y.dtype, copy=False)
    y_norm = _normalizer(y, m.sum(axis=0), guard, eps)
    return CoarseEstimate(y_norm[None] * m, y_norm, color=False)


def bayer_mosaic(rgb_video, pattern=BayerPattern.RGGB):
    """Sample an RGB video (3, B, nx, ny) onto a Bayer mosaic (B, nx, ny)."""
    rgb_video = np.asarray(rgb_video)
    if rgb_video.ndim != 4 or rgb_video.shape[0] != 3:
        raise ShapeError(f"expected (3, B, nx, ny), got {rgb_video.shape}", axis="channel")
    mosaic = np.empty(rgb_video.shape[1:], dtype=rgb_video.dtype)
    for (dr, dc), color in zip(BAYER_SITES[BayerPattern(pattern)], _SITE_COLOR):
        mosaic[:, dr::2, dc::2] = rgb_video[color, :, dr::2, dc::2]
    return mosaic


def capture_color(rgb_video, masks, noise_sigma=0.0, seed=None, pattern=BayerPattern.RGGB):
    return capture(bayer_mosaic(rgb_video, pattern), masks, noise_sigma, seed, color=True)


def split_bayer_estimate(measurement, masks, pattern=BayerPattern.RGGB, *, guard=False, eps=GUARD_EPS):
    """Per-site coarse estimates of a Bayer snapshot, shape (4, B, nx/2, ny/2).

    Each Bayer site is normalized and modulated with its own sub-sampled
    masks, so color channels never mix.
    """
    y = measurement.y
    nx, ny = y.shape
    if nx % 2 or ny % 2:
        axis = "x" if nx % 2 else "y"
        raise ShapeError(f"Bayer frames need even extents, got {y.shape}", axis=axis)
    if y.shape != masks.frame_shape:
        raise ShapeError(f"measurement shape {y.shape} != mask frame {masks.frame_shape}", axis="frame")
    m = masks.masks.astype(y.dtype, copy=False)
    frames, norms = [], []
    for dr, dc in BAYER_SITES[BayerPattern(pattern)]:
        sub_m = m[:, dr::2, dc::2]
        sub_norm = _normalizer(y[dr::2, dc::2], sub_m.sum(axis=0), guard, eps)
        frames.append(sub_norm[None] * sub_m)
        norms.append(sub_norm)
    return CoarseEstimate(np.stack(frames), np.stack(norms), color=True)


def prepare_input(measurement, masks, *, guard=False):
    """Coarse estimate matching the measurement kind (grayscale or Bayer)."""
    if measurement.color:
        return split_bayer_estimate(measurement, masks, guard=guard)
    return coarse_estimate(measurement, masks, guard=guard)


def coarse_video(ce):
    """Coarse estimate laid out like the ground truth, for baseline metrics.

    Grayscale returns the (B, nx, ny) estimate itself. Color upsamples each
    Bayer site by pixel replication and averages the two green sites into an
    RGB video (3, B, nx, ny).
    """
    if not ce.color:
        return ce.frames
    up = ce.frames.repeat(2, axis=2).repeat(2, axis=3)
    return np.stack([up[0], 0.5 * (up[1] + up[2]), up[3]])
