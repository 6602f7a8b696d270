"""Grayscale images and binary PGM files."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class PGMError(ValueError):
    """File is not an 8-bit binary PGM."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major intensities in [0, 1]; at least 4x4."""

    samples: np.ndarray

    def __post_init__(self):
        a = np.array(self.samples, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 4 or a.shape[1] < 4:
            raise ValueError(f"images must be 2-D and at least 4x4, got shape {a.shape}")
        if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        a.setflags(write=False)
        object.__setattr__(self, "samples", a)

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @classmethod
    def clipped(cls, arr) -> "GrayImage":
        return cls(np.clip(arr, 0.0, 1.0))

    def to_bytes(self) -> np.ndarray:
        return np.round(self.samples * 255.0).astype(np.uint8)


_HEADER = re.compile(rb"P5(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)\s")


def parse_pgm(data: bytes) -> GrayImage:
    m = _HEADER.match(data)
    if m is None:
        raise PGMError("missing P5 header")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise PGMError(f"only 8-bit PGM is supported (maxval {maxval})")
    body = data[m.end():]
    if len(body) < w * h:
        raise PGMError(f"truncated pixel data: {len(body)} of {w * h} bytes")
    px = np.frombuffer(body, dtype=np.uint8, count=w * h).reshape(h, w)
    try:
        return GrayImage(px / 255.0)
    except ValueError as exc:
        raise PGMError(str(exc)) from None


def read_pgm(path) -> GrayImage:
    return parse_pgm(Path(path).read_bytes())


def pgm_bytes(img: GrayImage) -> bytes:
    return b"P5\n%d %d\n255\n" % (img.width, img.height) + img.to_bytes().tobytes()


def write_pgm(path, img: GrayImage) -> None:
    Path(path).write_bytes(pgm_bytes(img))


def read_corpus(directory) -> list[GrayImage]:
    """All readable PGM files of a directory in name order; others are skipped with a warning."""
    out = []
    for p in sorted(Path(directory).iterdir()):
        if not p.is_file():
            continue
        try:
            out.append(read_pgm(p))
        except (PGMError, ValueError, OSError) as exc:
            log.warning("skipping %s: %s", p.name, exc)
    return out
