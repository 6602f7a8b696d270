"""Patch-wise Q-MAP image denoising and the hard-threshold baseline."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import kernels
from . import haar
from .codec import PatchPrior, cells_of, project_coeffs, quantized_coeffs
from .gray import GrayImage


def _positions(size: int, stride: int) -> np.ndarray:
    """Patch origins along one axis; the last origin always touches the border."""
    pos = np.arange(0, size - 3, stride)
    if pos[-1] != size - 4:
        pos = np.append(pos, size - 4)
    return pos


def extract_patches(a: np.ndarray, stride: int):
    if not 1 <= stride <= 4:
        # wider steps would leave pixels that no 4x4 patch covers
        raise ValueError("stride must be between 1 and 4")
    rows, cols = _positions(a.shape[0], stride), _positions(a.shape[1], stride)
    win = sliding_window_view(a, (4, 4))
    return win[rows[:, None], cols[None, :]].reshape(-1, 4, 4), rows, cols


def assemble(base: np.ndarray, corrections: np.ndarray, rows, cols) -> np.ndarray:
    """``base`` plus the per-pixel average of overlapping patch corrections.

    Averaging corrections rather than patches keeps untouched pixels
    bit-identical to the input.
    """
    acc = np.zeros(base.shape)
    cnt = np.zeros(base.shape)
    p = corrections.reshape(rows.shape[0], cols.shape[0], 4, 4)
    for di in range(4):
        for dj in range(4):
            r = (rows + di)[:, None]
            c = (cols + dj)[None, :]
            np.add.at(acc, (r, c), p[:, :, di, dj])
            np.add.at(cnt, (r, c), 1.0)
    return base + acc / cnt


class _SearchTables:
    """Arrays the codeword search kernel needs, derived once per prior and lambda."""

    def __init__(self, prior: PatchPrior, lam: float):
        self.prior = prior
        self.lam = float(lam)
        self.lo, self.hic = prior.breakpoints.cell_bounds()
        codes, weights = prior.search_order()
        self.codes = codes
        self.cells = np.ascontiguousarray(haar.unpack(codes))
        self.pens = np.ascontiguousarray(self.lam * weights)

    def choose(self, coef: np.ndarray) -> np.ndarray:
        """Chosen codeword for each coefficient stack ``(n, 4, 4)``."""
        q = np.ascontiguousarray(quantized_coeffs(coef))
        own = haar.pack(cells_of(q, self.prior.breakpoints))
        own_pen = self.lam * self.prior.weight(own)
        if self.codes.shape[0] == 0:
            return own
        pick = kernels.patch_search(q, own_pen, self.lo, self.hic, self.cells, self.pens)
        return np.where(pick >= 0, self.codes[np.maximum(pick, 0)], own)


def denoise_coeffs(coef: np.ndarray, prior: PatchPrior, lam: float) -> np.ndarray:
    tables = _SearchTables(prior, lam)
    return project_coeffs(coef, tables.choose(coef), prior.breakpoints)


def denoise_patch(noisy_patch, prior: PatchPrior, lam: float) -> np.ndarray:
    """Projection of the patch onto the codeword minimising distance + lam * weight.

    The search is exact over all ``2**28`` codewords: unseen codewords all
    cost at least ``lam`` times the floor weight, which the patch's own cell
    already achieves at zero distance.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    patch = np.asarray(noisy_patch, dtype=np.float64)
    coef = haar.dwt2(patch)
    single = coef.ndim == 2
    c = coef[None] if single else coef
    out = (patch[None] if single else patch) + haar.idwt2(denoise_coeffs(c, prior, lam) - c)
    return out[0] if single else out


def exhaustive_choice(noisy_patch, prior: PatchPrior, lam: float) -> int:
    """Reference search: the patch's own cell plus every stored codeword, no pruning."""
    coef = haar.dwt2(noisy_patch)
    q = quantized_coeffs(coef)
    own = int(haar.pack(cells_of(q, prior.breakpoints)))
    own_cost = lam * float(prior.weight(own))
    codes, weights = prior.search_order()
    if codes.shape[0] == 0:
        return own
    lo, hic = prior.breakpoints.cell_bounds()
    cells = haar.unpack(codes)
    cols = np.arange(q.shape[0])
    d = q - np.minimum(np.maximum(q, lo[cols, cells]), hic[cols, cells])
    cost = lam * weights
    for j in cols:
        cost = cost + d[:, j] * d[:, j]
    first = int(np.argmin(cost))
    return int(codes[first]) if cost[first] < own_cost else own


def denoise_image(noisy: GrayImage, prior: PatchPrior, lam: float, stride: int = 1) -> GrayImage:
    """Denoise every 4x4 patch at the given stride and average the overlaps.

    The result is clipped to [0, 1].
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    patches, rows, cols = extract_patches(noisy.samples, stride)
    coef = haar.dwt2(patches)
    corr = haar.idwt2(denoise_coeffs(coef, prior, lam) - coef)
    return GrayImage.clipped(assemble(noisy.samples, corr, rows, cols))


def hard_threshold_image(noisy: GrayImage, threshold: float, stride: int = 1) -> GrayImage:
    """Zero AC coefficients with magnitude at most ``threshold`` in every patch."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    patches, rows, cols = extract_patches(noisy.samples, stride)
    coef = haar.dwt2(patches)
    drop = np.abs(coef) <= threshold
    drop[:, 0, 0] = False
    corr = haar.idwt2(np.where(drop, -coef, 0.0))
    return GrayImage.clipped(assemble(noisy.samples, corr, rows, cols))
