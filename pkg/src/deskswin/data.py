"""Procedural toy datasets and an image-folder loader, all in [-1, 1]."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attention import ConfigError

KINDS = ("two-blobs", "ring-gaussians", "checker-shapes", "image-folder")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass
class DatasetSpec:
    kind: str = "two-blobs"
    size: int = 16
    count: int = 10000
    seed: int = 0
    path: str = ""

    def validate(self) -> "DatasetSpec":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown dataset kind {self.kind!r}; expected one of {KINDS}")
        if self.size < 4 or self.count < 0:
            raise ConfigError("dataset size must be >= 4 and count >= 0")
        if self.kind == "image-folder" and not self.path:
            raise ConfigError("image-folder dataset needs a path")
        return self


def _gray_to_rgb(img: np.ndarray) -> np.ndarray:
    return np.repeat(img[..., None], 3, axis=-1)


def _blob(size, cy, cx, sigma, amp):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    return amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma ** 2))


def two_blobs_mode(seed: int, index: int) -> int:
    return int(np.random.default_rng([seed, index]).integers(2))


def two_blobs(size: int, seed: int, index: int) -> np.ndarray:
    """A Gaussian blob near the upper-left or lower-right quarter point."""
    rng = np.random.default_rng([seed, index])
    mode = rng.integers(2)
    c = size / 4.0 if mode == 0 else 3.0 * size / 4.0
    cy, cx = c + rng.uniform(-1.0, 1.0, size=2)
    sigma = size / 8.0 * rng.uniform(0.8, 1.2)
    amp = rng.uniform(0.7, 1.0)
    return _gray_to_rgb(-1.0 + 2.0 * _blob(size, cy, cx, sigma, amp))


def ring_gaussians(size: int, seed: int, index: int, modes: int = 8) -> np.ndarray:
    """A blob at one of ``modes`` positions spaced evenly on a circle."""
    rng = np.random.default_rng([seed, index])
    k = rng.integers(modes)
    ang = 2.0 * np.pi * k / modes
    r = size / 3.0
    cy = size / 2.0 - 0.5 + r * np.sin(ang) + rng.uniform(-0.5, 0.5)
    cx = size / 2.0 - 0.5 + r * np.cos(ang) + rng.uniform(-0.5, 0.5)
    sigma = size / 12.0 * rng.uniform(0.8, 1.2)
    return _gray_to_rgb(-1.0 + 2.0 * _blob(size, cy, cx, sigma, 1.0))


def checker_shapes(size: int, seed: int, index: int) -> np.ndarray:
    """A filled disk or square on a faint checkerboard, in a random colour."""
    rng = np.random.default_rng([seed, index])
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cell = int(rng.choice([2, 4]))
    board = 0.2 * (((yy // cell + xx // cell) % 2) - 0.5)
    r = size * rng.uniform(0.15, 0.3)
    cy, cx = rng.uniform(r, size - r, size=2)
    if rng.integers(2):
        shape = ((yy - cy) ** 2 + (xx - cx) ** 2) <= r * r
    else:
        shape = (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
    color = rng.uniform(-1.0, 1.0, size=3)
    img = np.repeat((board - 0.5)[..., None], 3, axis=-1)
    img[shape] = color
    return np.clip(img, -1.0, 1.0)


_GENERATORS = {"two-blobs": two_blobs, "ring-gaussians": ring_gaussians,
               "checker-shapes": checker_shapes}


class Dataset:
    """Random-access view of a ``DatasetSpec``; items are [S, S, 3] float64."""

    def __init__(self, spec: DatasetSpec):
        self.spec = spec.validate()
        self._files = None
        if spec.kind == "image-folder":
            root = Path(spec.path)
            if not root.is_dir():
                raise ConfigError(f"image folder {root} does not exist")
            files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
            self._files = files[:spec.count] if spec.count else files

    def __len__(self) -> int:
        return len(self._files) if self._files is not None else self.spec.count

    def __getitem__(self, index: int) -> np.ndarray:
        if not 0 <= index < len(self):
            raise IndexError(index)
        if self._files is not None:
            return load_image(self._files[index], self.spec.size)
        return _GENERATORS[self.spec.kind](self.spec.size, self.spec.seed, index)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def batch(self, indices) -> np.ndarray:
        return np.stack([self[int(i)] for i in indices])


def synth_dataset(spec: DatasetSpec):
    """Stream of images for ``spec``."""
    return iter(Dataset(spec))


def load_image(path, size: int) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        im = im.convert("RGB")
        if im.size != (size, size):
            im = im.resize((size, size), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float64)
    return arr / 127.5 - 1.0
