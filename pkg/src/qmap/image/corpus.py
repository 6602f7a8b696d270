"""Local training corpus and benchmark images built from bundled sample images.

Needs scikit-image (and scikit-learn for two extra photographs).  The
test image (cameraman) and the validation image are never tiled into the
training corpus.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .gray import GrayImage, write_pgm

log = logging.getLogger(__name__)

TEST_IMAGE = "camera"
VALIDATION_IMAGE = "coffee"
TRAINING_SOURCES = (
    "astronaut", "brick", "chelsea", "clock", "coins", "grass", "gravel",
    "hubble_deep_field", "immunohistochemistry", "moon", "retina", "rocket",
)


def _to_gray_u8(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim == 3:
        rgb = a[..., :3].astype(np.float64)
        a = rgb @ np.array([0.2125, 0.7154, 0.0721])
    return np.clip(np.round(a), 0, 255).astype(np.uint8)


def _halve(a: np.ndarray) -> np.ndarray:
    h, w = a.shape[0] // 2 * 2, a.shape[1] // 2 * 2
    b = a[:h, :w].astype(np.float64)
    return np.round((b[0::2, 0::2] + b[0::2, 1::2] + b[1::2, 0::2] + b[1::2, 1::2]) / 4).astype(np.uint8)


def bundled_image(name: str) -> GrayImage:
    """Bundled photograph as an 8-bit grayscale image."""
    if name in ("china.jpg", "flower.jpg"):
        from sklearn.datasets import load_sample_image

        return GrayImage(_to_gray_u8(load_sample_image(name)) / 255.0)
    import skimage.data

    return GrayImage(_to_gray_u8(getattr(skimage.data, name)()) / 255.0)


def test_image() -> GrayImage:
    """Cameraman at the customary 256x256 (2x2 block mean of the bundled 512x512)."""
    import skimage.data

    return GrayImage(_halve(_to_gray_u8(skimage.data.camera())) / 255.0)


def validation_image() -> GrayImage:
    a = (bundled_image(VALIDATION_IMAGE).samples * 255).round().astype(np.uint8)
    return GrayImage(_halve(a)[:256, :256] / 255.0)


def training_tiles(tile: int = 128) -> list[GrayImage]:
    """Non-overlapping ``tile`` x ``tile`` crops of every training source."""
    names = list(TRAINING_SOURCES)
    sources = []
    for name in names:
        try:
            sources.append(bundled_image(name))
        except Exception as exc:  # optional data may be missing
            log.warning("skipping sample image %s: %s", name, exc)
    for name in ("china.jpg", "flower.jpg"):
        try:
            sources.append(bundled_image(name))
        except Exception as exc:
            log.warning("skipping sample image %s: %s", name, exc)
    tiles = []
    for img in sources:
        a = img.samples
        for r in range(0, a.shape[0] - tile + 1, tile):
            for c in range(0, a.shape[1] - tile + 1, tile):
                tiles.append(GrayImage(a[r:r + tile, c:c + tile]))
    return tiles


def write_corpus(directory, tile: int = 128) -> int:
    """Write the training tiles as numbered PGM files; returns how many."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    tiles = training_tiles(tile)
    for i, t in enumerate(tiles):
        write_pgm(d / f"tile{i:05d}.pgm", t)
    return len(tiles)
