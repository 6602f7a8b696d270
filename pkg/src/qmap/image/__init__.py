"""Patch-based Q-MAP image denoising."""

from .codec import (
    Breakpoints,
    PatchPrior,
    PriorError,
    build_breakpoints,
    encode,
    project,
    train_prior,
)
from .denoise import denoise_image, denoise_patch, exhaustive_choice, hard_threshold_image
from .gray import GrayImage, PGMError, read_corpus, read_pgm, write_pgm
from .haar import dwt2, idwt2

__all__ = [
    "Breakpoints", "PatchPrior", "PriorError", "build_breakpoints", "encode", "project",
    "train_prior", "denoise_image", "denoise_patch", "exhaustive_choice", "hard_threshold_image",
    "GrayImage", "PGMError", "read_corpus", "read_pgm", "write_pgm", "dwt2", "idwt2",
]
