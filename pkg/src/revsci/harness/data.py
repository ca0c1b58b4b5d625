"""Random spatio-temporal crops from a directory of videos."""
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ShapeError
from ..numerics import read_tensor

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
# ITU-R BT.601 luma weights for RGB sources cropped to grayscale
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class Crop:
    source: str
    t: int
    row: int
    col: int
    flip_rows: bool
    flip_cols: bool


@dataclass
class Dataset:
    cubes: list = field(default_factory=list)
    crops: list = field(default_factory=list)

    def __len__(self):
        return len(self.cubes)

    def __iter__(self):
        return iter(self.cubes)

    def __getitem__(self, i):
        return self.cubes[i]


def _load_frames(folder):
    try:
        from PIL import Image
    except ImportError:
        warnings.warn(f"skipping {folder}: Pillow is needed to read image frames")
        return None
    files = sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        return None
    frames = []
    for f in files:
        with Image.open(f) as im:
            frames.append(np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0)
    # (T, H, W, 3) -> (3, T, H, W)
    return np.moveaxis(np.stack(frames), -1, 0)


def _load(path):
    if path.is_dir():
        return _load_frames(path)
    if path.suffix == ".npy":
        return np.load(path).astype(np.float64)
    if path.suffix == ".rvt":
        return read_tensor(path).astype(np.float64)
    return None


def _as_layout(video, color):
    """Bring a (T, H, W) or (3, T, H, W) video to the requested layout, or None if impossible."""
    if video.ndim == 4 and video.shape[0] == 3:
        return video if color else np.tensordot(LUMA, video, axes=1)
    if video.ndim == 3 and not color:
        return video
    return None


def ingest_video_dir(path, crop, count, seed=0, flips=True):
    """Draw ``count`` random crops of shape ``crop`` from the videos under ``path``.

    ``crop`` is (B, nx, ny) for grayscale or (3, B, nx, ny) for RGB. Sources
    are ``.rvt``/``.npy`` arrays and subdirectories of image frames. Sources
    that are too short, too small or of the wrong layout are skipped with a
    warning. Values are expected in [0, 1].
    """
    path = Path(path)
    crop = tuple(int(c) for c in crop)
    color = len(crop) == 4
    if len(crop) not in (3, 4) or (color and crop[0] != 3):
        raise ShapeError(f"crop must be (B, nx, ny) or (3, B, nx, ny), got {crop}", axis="ndim")
    B, nx, ny = crop[-3:]

    videos = []
    for src in sorted(path.iterdir()):
        video = _load(src)
        if video is None:
            continue
        video = _as_layout(video, color)
        if video is None:
            warnings.warn(f"skipping {src.name}: layout does not match crop {crop}")
            continue
        T, H, W = video.shape[-3:]
        if T < B:
            warnings.warn(f"skipping {src.name}: {T} frames < {B}")
            continue
        if H < nx or W < ny:
            warnings.warn(f"skipping {src.name}: frame {H}x{W} smaller than crop {nx}x{ny}")
            continue
        videos.append((src.name, video))
    if not videos:
        raise ValueError(f"no usable videos under {path}")

    rng = np.random.default_rng(seed)
    out = Dataset()
    for _ in range(count):
        name, video = videos[int(rng.integers(len(videos)))]
        T, H, W = video.shape[-3:]
        t, r, c = (int(rng.integers(n - k + 1)) for n, k in ((T, B), (H, nx), (W, ny)))
        fr, fc = (bool(b) for b in rng.integers(2, size=2)) if flips else (False, False)
        cube = video[..., t:t + B, r:r + nx, c:c + ny]
        if fr:
            cube = cube[..., ::-1, :]
        if fc:
            cube = cube[..., ::-1]
        out.cubes.append(np.ascontiguousarray(cube))
        out.crops.append(Crop(name, t, r, c, fr, fc))
    return out
