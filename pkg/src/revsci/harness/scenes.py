"""Deterministic synthetic video scenes with values in [0, 1]."""
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from ..errors import ShapeError


class SceneKind(str, Enum):
    MOVING_SQUARE = "moving_square"
    BOUNCING_BALL = "bouncing_ball"
    SINUSOID_TEXTURE = "sinusoid_texture"
    FILE = "file"


SYNTHETIC_KINDS = (SceneKind.MOVING_SQUARE, SceneKind.BOUNCING_BALL, SceneKind.SINUSOID_TEXTURE)


@dataclass(frozen=True)
class SceneSpec:
    """One synthetic clip.

    ``size`` is (B, nx, ny) for grayscale or (3, B, nx, ny) for RGB.
    ``velocity`` is in pixels per frame along (rows, cols); a scalar moves
    along rows only. ``path`` is only read for ``kind="file"``.
    """

    kind: SceneKind = SceneKind.MOVING_SQUARE
    size: tuple = (8, 64, 64)
    velocity: tuple = (1.0, 0.0)
    seed: int = 0
    path: str = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SceneKind(self.kind))
        object.__setattr__(self, "size", tuple(int(s) for s in self.size))
        v = self.velocity
        v = (float(v), 0.0) if np.isscalar(v) else tuple(float(c) for c in v)
        object.__setattr__(self, "velocity", v)
        if len(self.size) not in (3, 4) or (len(self.size) == 4 and self.size[0] != 3):
            raise ShapeError(f"size must be (B, nx, ny) or (3, B, nx, ny), got {self.size}", axis="ndim")
        if min(self.size) < 1:
            raise ShapeError(f"size extents must be positive, got {self.size}", axis="ndim")

    @property
    def color(self):
        return len(self.size) == 4

    @property
    def frames(self):
        return self.size[-3]

    @property
    def frame_shape(self):
        return self.size[-2:]


def _tint(rng, color):
    """Per-channel scale for a foreground object; a single 1 for grayscale."""
    return rng.uniform(0.4, 1.0, size=3) if color else np.ones(1)


def _moving_square(spec, rng):
    B, (nx, ny) = spec.frames, spec.frame_shape
    side = int(rng.integers(max(1, min(nx, ny) // 6), max(2, min(nx, ny) // 3) + 1))
    r0, c0 = int(rng.integers(nx)), int(rng.integers(ny))
    bg = rng.uniform(0.0, 0.3)
    fg = rng.uniform(0.6, 1.0)
    tint = _tint(rng, spec.color)
    rows, cols = np.arange(nx), np.arange(ny)
    out = np.full((len(tint), B, nx, ny), bg)
    for k in range(B):
        # integer offsets so that velocity 1 moves exactly one pixel per frame, wrapping at the border
        r = (r0 + int(round(spec.velocity[0] * k))) % nx
        c = (c0 + int(round(spec.velocity[1] * k))) % ny
        inside = ((rows - r) % nx < side)[:, None] & ((cols - c) % ny < side)[None, :]
        for ch, t in enumerate(tint):
            out[ch, k][inside] = fg * t
    return out


def _reflect(p, lo, hi):
    """Fold a coordinate into [lo, hi] by mirror reflection at both walls."""
    span = hi - lo
    if span <= 0:
        return lo
    q = (p - lo) % (2 * span)
    return lo + (q if q <= span else 2 * span - q)


def _bouncing_ball(spec, rng):
    B, (nx, ny) = spec.frames, spec.frame_shape
    radius = rng.uniform(max(1.0, min(nx, ny) / 10), max(1.5, min(nx, ny) / 5))
    p0 = rng.uniform([radius, radius], [max(radius, nx - 1 - radius), max(radius, ny - 1 - radius)])
    bg = rng.uniform(0.0, 0.3)
    fg = rng.uniform(0.6, 1.0)
    tint = _tint(rng, spec.color)
    rr, cc = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    out = np.empty((len(tint), B, nx, ny))
    for k in range(B):
        r = _reflect(p0[0] + spec.velocity[0] * k, radius, nx - 1 - radius)
        c = _reflect(p0[1] + spec.velocity[1] * k, radius, ny - 1 - radius)
        # soft one-pixel edge keeps the disk band-limited
        edge = np.clip(radius + 0.5 - np.hypot(rr - r, cc - c), 0.0, 1.0)
        for ch, t in enumerate(tint):
            out[ch, k] = bg + (fg * t - bg) * edge
    return out


def _sinusoid_texture(spec, rng):
    B, (nx, ny) = spec.frames, spec.frame_shape
    n_waves = 3
    freqs = rng.uniform(-0.25, 0.25, size=(n_waves, 2))
    phases = rng.uniform(0, 2 * np.pi, size=n_waves)
    amps = rng.uniform(0.5, 1.0, size=n_waves)
    amps /= amps.sum()
    tint = _tint(rng, spec.color)
    rr, cc = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    out = np.empty((len(tint), B, nx, ny))
    for k in range(B):
        r = rr - spec.velocity[0] * k
        c = cc - spec.velocity[1] * k
        wave = sum(a * np.cos(2 * np.pi * (f[0] * r + f[1] * c) + ph) for a, f, ph in zip(amps, freqs, phases))
        for ch, t in enumerate(tint):
            out[ch, k] = 0.5 + 0.5 * t * wave
    return out


def _from_file(spec):
    from ..numerics import read_tensor

    if spec.path is None:
        raise ValueError("scene kind 'file' needs a path")
    path = Path(spec.path)
    video = np.load(path) if path.suffix == ".npy" else read_tensor(path)
    video = np.asarray(video, dtype=np.float64)
    if video.shape != spec.size:
        raise ShapeError(f"{path} holds shape {video.shape}, expected {spec.size}", axis="ndim")
    return video


_GENERATORS = {
    SceneKind.MOVING_SQUARE: _moving_square,
    SceneKind.BOUNCING_BALL: _bouncing_ball,
    SceneKind.SINUSOID_TEXTURE: _sinusoid_texture,
}


def synth_video(spec, dtype=np.float64):
    """Render ``spec`` to an array of shape ``spec.size`` with values in [0, 1]."""
    if spec.kind is SceneKind.FILE:
        video = _from_file(spec)
    else:
        video = _GENERATORS[spec.kind](spec, np.random.default_rng(spec.seed))
        if not spec.color:
            video = video[0]
    return np.clip(video, 0.0, 1.0).astype(dtype)


def random_scene(seed, size=(8, 64, 64), kinds=SYNTHETIC_KINDS, max_speed=2.0):
    """A SceneSpec with kind and velocity drawn from ``seed``."""
    rng = np.random.default_rng([seed, 0x5CE7E])
    kind = kinds[int(rng.integers(len(kinds)))]
    velocity = tuple(float(v) for v in rng.uniform(-max_speed, max_speed, size=2))
    return SceneSpec(kind, size, velocity, seed)
