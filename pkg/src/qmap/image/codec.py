"""Patch quantizer, learned codeword prior and its text file format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..seeding import rng
from . import haar
from .gray import GrayImage

# out-of-cell coefficients are projected this far inside the cell boundary
_MARGIN = 1e-12
# spacing used to separate tied quantiles
_NUDGE = 1e-9

FORMAT_TAG = "qmap-patch-prior"
FORMAT_VERSION = 1


class PriorError(ValueError):
    """Malformed or inconsistent prior data."""


@dataclass(frozen=True, eq=False)
class Breakpoints:
    """Sorted thresholds for each quantized coefficient (row-major order)."""

    values: tuple

    def __post_init__(self):
        vals = tuple(np.asarray(v, dtype=np.float64) for v in self.values)
        if len(vals) != len(haar.QBITS):
            raise PriorError(f"expected {len(haar.QBITS)} coefficient lists, got {len(vals)}")
        for v, bits in zip(vals, haar.QBITS):
            if v.shape != ((1 << bits) - 1,):
                raise PriorError(f"a {bits}-bit coefficient needs {(1 << bits) - 1} breakpoints")
            if not np.all(np.isfinite(v)) or np.any(np.diff(v) <= 0):
                raise PriorError("breakpoints must be finite and strictly increasing")
            v.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def cell_bounds(self, margin: float = 0.0):
        """``(lo, hic)`` arrays of shape ``(12, 16)``: closed box of each cell.

        With ``margin > 0`` the boxes are shrunk by that much on both finite
        sides.  Unused slots (coefficients with fewer than 16 cells) are NaN.
        """
        ncoef = len(self.values)
        lo = np.full((ncoef, 16), np.nan)
        hic = np.full((ncoef, 16), np.nan)
        for j, v in enumerate(self.values):
            k = v.shape[0] + 1
            lo[j, :k] = np.concatenate(([-np.inf], v + margin))
            top = np.nextafter(v, -np.inf) if margin == 0.0 else v - margin
            hic[j, :k] = np.concatenate((top, [np.inf]))
        return lo, hic

    def __eq__(self, other):
        return isinstance(other, Breakpoints) and all(
            np.array_equal(a, b) for a, b in zip(self.values, other.values))


def build_breakpoints(coeffs) -> Breakpoints:
    """Equal-mass empirical quantiles for every quantized coefficient.

    ``coeffs`` is an ``(n, 4, 4)`` stack of transform coefficients or an
    ``(n, 12)`` array of the quantized ones.  Tied quantiles are pushed apart
    by a tiny step so every cell stays nonempty.
    """
    c = np.asarray(coeffs, dtype=np.float64)
    if c.ndim == 3:
        c = c.reshape(c.shape[0], 16)[:, haar.QFLAT]
    if c.ndim != 2 or c.shape[1] != len(haar.QBITS):
        raise PriorError("coefficients must be (n, 4, 4) or (n, 12)")
    out = []
    for j, bits in enumerate(haar.QBITS):
        k = 1 << bits
        col = c[:, j]
        if col.shape[0] < k:
            raise PriorError(f"need at least {k} samples for a {bits}-bit coefficient")
        if np.all(col == col[0]):
            raise PriorError("all training samples of a coefficient are equal")
        q = np.quantile(col, np.arange(1, k) / k)
        for i in range(1, q.shape[0]):
            step = _NUDGE * max(1.0, abs(q[i - 1]))
            if q[i] < q[i - 1] + step:
                q[i] = q[i - 1] + step
        out.append(q)
    return Breakpoints(tuple(out))


def quantized_coeffs(coef) -> np.ndarray:
    """The 12 quantized coefficients of ``(..., 4, 4)`` stacks, as ``(..., 12)``."""
    c = np.asarray(coef, dtype=np.float64)
    return c.reshape(c.shape[:-2] + (16,))[..., haar.QFLAT]


def cells_of(qcoef, bp: Breakpoints) -> np.ndarray:
    qcoef = np.asarray(qcoef, dtype=np.float64)
    cells = np.empty(qcoef.shape, dtype=np.int64)
    for j, v in enumerate(bp.values):
        cells[..., j] = np.searchsorted(v, qcoef[..., j], side="right")
    return cells


def encode(patch, bp: Breakpoints):
    """28-bit codeword of a 4x4 patch (or an array of codewords for a stack)."""
    codes = haar.pack(cells_of(quantized_coeffs(haar.dwt2(patch)), bp))
    return int(codes) if codes.ndim == 0 else codes


def project_coeffs(coef, code, bp: Breakpoints) -> np.ndarray:
    """Move the quantized coefficients of ``coef`` into the cells of ``code``.

    Coefficients already in their target cell are left untouched; the others
    are clamped to a box shrunk by a tiny margin so that the round trip
    through pixel space cannot land them back on a breakpoint.
    """
    c = np.array(coef, dtype=np.float64, copy=True)
    lo, hic = bp.cell_bounds(_MARGIN)
    target = haar.unpack(code)
    flat = c.reshape(c.shape[:-2] + (16,))
    cols = np.arange(len(bp.values))
    q = flat[..., haar.QFLAT]
    moved = np.minimum(np.maximum(q, lo[cols, target]), hic[cols, target])
    flat[..., haar.QFLAT] = np.where(cells_of(q, bp) == target, q, moved)
    return flat.reshape(c.shape)


def project(patch, code: int, bp: Breakpoints):
    """Closest patch inside codeword ``code``'s cell, and its squared distance.

    The cell is a box in the transform domain, so the projection clamps each
    quantized coefficient; pass-through coefficients are left alone.
    """
    if not 0 <= int(code) < haar.NCODES:
        raise PriorError(f"codeword {code} out of range")
    coef = haar.dwt2(patch)
    pc = project_coeffs(coef, int(code), bp)
    return haar.idwt2(pc), float(np.sum((pc - coef) ** 2))


# ---------------------------------------------------------------------------
# smoothed codeword prior


@dataclass(frozen=True, eq=False)
class PatchPrior:
    """Codeword counts with one pseudo-occurrence per codeword.

    ``P(k) = (count(k) + 1) / (total + N)`` with ``N = 2**28``; codewords
    never seen have count zero.  Weights are ``-log2 P`` in bits.
    """

    breakpoints: Breakpoints
    codes: np.ndarray
    counts: np.ndarray
    _order: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64).reshape(-1)
        counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if codes.shape != counts.shape:
            raise PriorError("codes and counts differ in length")
        if codes.size and (codes.min() < 0 or codes.max() >= haar.NCODES):
            raise PriorError("codeword out of range")
        if np.any(counts <= 0):
            raise PriorError("stored counts must be positive")
        order = np.argsort(codes, kind="stable")
        codes, counts = codes[order], counts[order]
        if np.any(np.diff(codes) == 0):
            raise PriorError("duplicate codeword")
        codes.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "counts", counts)
        # search order: most frequent first, then by codeword
        rank = np.lexsort((codes, -counts))
        object.__setattr__(self, "_order", rank)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def denominator(self) -> float:
        return float(self.total + haar.NCODES)

    @property
    def floor_weight(self) -> float:
        """Weight of every codeword never seen in training."""
        return math.log2(self.denominator)

    def __len__(self):
        return self.codes.shape[0]

    def count(self, codes) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        pos = np.minimum(np.searchsorted(self.codes, codes), max(len(self) - 1, 0))
        out = np.zeros(codes.shape, dtype=np.int64)
        if len(self):
            hit = self.codes[pos] == codes
            out[hit] = self.counts[pos[hit]]
        return out

    def prob(self, codes) -> np.ndarray:
        return (self.count(codes) + 1.0) / self.denominator

    def weight(self, codes) -> np.ndarray:
        return self.floor_weight - np.log2(self.count(codes) + 1.0)

    def total_mass(self) -> float:
        stored = float(np.sum(self.counts + 1.0))
        unseen = float(haar.NCODES - len(self))
        return (stored + unseen) / self.denominator

    def search_order(self):
        """Stored codewords by increasing weight, with their weights."""
        codes = self.codes[self._order]
        return codes, self.floor_weight - np.log2(self.counts[self._order] + 1.0)

    def rank_probabilities(self) -> np.ndarray:
        """Stored-mass share of each stored codeword, most frequent first."""
        c = np.sort(self.counts)[::-1].astype(np.float64)
        return c / c.sum() if c.size else c

    def top_share(self, fraction: float = 0.01) -> float:
        """Share of stored mass carried by the top ``fraction`` of stored codewords."""
        p = self.rank_probabilities()
        if p.size == 0:
            return 0.0
        k = max(1, int(math.ceil(fraction * p.size)))
        return float(p[:k].sum())

    # -- file format -------------------------------------------------------

    def dumps(self) -> str:
        lines = [f"{FORMAT_TAG} v{FORMAT_VERSION}",
                 "layout haar4x4 " + " ".join(f"{f}:{b}" for f, b in sorted(haar.FREQ_BITS.items()))]
        for (r, c), bits, v in zip(haar.QPOS, haar.QBITS, self.breakpoints.values):
            lines.append(f"bp {r} {c} {bits} " + " ".join(repr(float(x)) for x in v))
        lines.append(f"counts {len(self)} total {self.total}")
        lines.extend(f"{int(k)} {int(n)}" for k, n in zip(self.codes, self.counts))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "PatchPrior":
        lines = text.splitlines()
        if not lines or lines[0].split() != [FORMAT_TAG, f"v{FORMAT_VERSION}"]:
            raise PriorError("not a version-1 patch prior file")
        layout = "layout haar4x4 " + " ".join(f"{f}:{b}" for f, b in sorted(haar.FREQ_BITS.items()))
        if len(lines) < 2 or lines[1] != layout:
            raise PriorError("unsupported codeword layout")
        nq = len(haar.QBITS)
        bp = []
        try:
            for j in range(nq):
                tok = lines[2 + j].split()
                if tok[0] != "bp" or (int(tok[1]), int(tok[2]), int(tok[3])) != (
                        *map(int, haar.QPOS[j]), int(haar.QBITS[j])):
                    raise PriorError(f"bad breakpoint line {3 + j}")
                bp.append([float(x) for x in tok[4:]])
            head = lines[2 + nq].split()
            if head[0] != "counts" or head[2] != "total":
                raise PriorError("missing counts header")
            nrec, total = int(head[1]), int(head[3])
            recs = [ln.split() for ln in lines[3 + nq:] if ln.strip()]
        except (IndexError, ValueError) as exc:
            if isinstance(exc, PriorError):
                raise
            raise PriorError(f"malformed prior file: {exc}") from None
        if len(recs) != nrec or any(len(r) != 2 for r in recs):
            raise PriorError("codeword record count does not match the header")
        codes = np.array([int(r[0]) for r in recs], dtype=np.int64)
        counts = np.array([int(r[1]) for r in recs], dtype=np.int64)
        prior = cls(Breakpoints(tuple(bp)), codes, counts)
        if prior.total != total:
            raise PriorError("stored counts do not add up to the header total")
        return prior

    @classmethod
    def load(cls, path) -> "PatchPrior":
        return cls.loads(Path(path).read_text())


def sample_patches(img: GrayImage, count: int, gen: np.random.Generator) -> np.ndarray:
    """``count`` 4x4 patches at uniformly random positions."""
    a = img.samples
    r = gen.integers(0, a.shape[0] - 3, size=count)
    c = gen.integers(0, a.shape[1] - 3, size=count)
    off = np.arange(4)
    return a[(r[:, None] + off)[:, :, None], (c[:, None] + off)[:, None, :]]


def train_prior(corpus, patches_per_image: int = 128, seed=None,
                breakpoints: Breakpoints | None = None) -> PatchPrior:
    """Learn breakpoints and codeword counts from random patches of a corpus.

    Given ``breakpoints``, only the counts are learned.
    """
    images = list(corpus)
    if not images:
        raise PriorError("empty training corpus")
    if seed is None:
        raise ValueError("a seed is required")
    patches = np.concatenate(
        [sample_patches(img, patches_per_image, rng(seed, i)) for i, img in enumerate(images)])
    coef = haar.dwt2(patches)
    bp = build_breakpoints(coef) if breakpoints is None else breakpoints
    codes = haar.pack(cells_of(quantized_coeffs(coef), bp))
    uniq, counts = np.unique(codes, return_counts=True)
    return PatchPrior(bp, uniq, counts)
