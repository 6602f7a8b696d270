"""Uniform quantizer on [0, 1), sliding-block statistics and weight tables.

Weights are negative base-2 log-probabilities of quantized blocks, so they
are measured in bits and the per-block regulariser ``w / b`` sits near 1 on
unstructured blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_TOP = math.nextafter(1.0, 0.0)


class QuantizationError(ValueError):
    """Raised for inputs outside the quantizer's domain."""


@dataclass(frozen=True)
class QuantSpec:
    """``b``-bit uniform quantizer of [0, 1)."""

    b: int

    def __post_init__(self):
        if not isinstance(self.b, (int, np.integer)) or self.b < 1:
            raise ValueError(f"bits per symbol must be a positive integer, got {self.b!r}")
        if self.b > 30:
            raise ValueError("at most 30 bits per symbol are supported")

    @property
    def nbins(self) -> int:
        return 1 << int(self.b)

    @property
    def width(self) -> float:
        return 1.0 / self.nbins


def quantize(x, spec: QuantSpec):
    """Bin index ``floor(2**b * x)`` of ``x`` in [0, 1).

    Accepts scalars or arrays.  The value 1.0 is folded into the last bin;
    anything else outside [0, 1) raises :class:`QuantizationError`.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise QuantizationError("values must lie in [0, 1)")
    idx = np.minimum(np.floor(arr * spec.nbins), spec.nbins - 1).astype(np.int64)
    if idx.ndim == 0:
        return int(idx)
    return idx


def quantize_clamped(x, spec: QuantSpec):
    """Like :func:`quantize` but clamps arbitrary reals into [0, 1) first."""
    arr = np.clip(np.asarray(x, dtype=np.float64), 0.0, _TOP)
    idx = (arr * spec.nbins).astype(np.int64)
    if idx.ndim == 0:
        return int(idx)
    return idx


def bin_interval(a: int, spec: QuantSpec) -> tuple[float, float]:
    """Half-open interval ``[a 2**-b, (a+1) 2**-b)`` covered by bin ``a``."""
    if not 0 <= a < spec.nbins:
        raise IndexError(f"bin {a} out of range for b={spec.b}")
    return a * spec.width, (a + 1) * spec.width


def _window_keys(bins: np.ndarray, m: int, nbits: int) -> np.ndarray:
    """Integer code of every length-``m`` sliding window, first symbol most significant."""
    if m * nbits > 62:
        raise ValueError("block too long to encode as a 64-bit key")
    win = sliding_window_view(bins, m)
    keys = np.zeros(win.shape[0], dtype=np.int64)
    for j in range(m):
        keys = (keys << nbits) | win[:, j]
    return keys


def _decode_key(key: int, m: int, nbits: int) -> tuple[int, ...]:
    mask = (1 << nbits) - 1
    return tuple((int(key) >> (nbits * (m - 1 - j))) & mask for j in range(m))


def empirical_block_dist(u, m: int, spec: QuantSpec) -> dict[tuple[int, ...], float]:
    """Frequencies of the quantized length-``m`` sliding windows of ``u``."""
    u = np.asarray(u, dtype=np.float64)
    if m < 1:
        raise ValueError("block length must be at least 1")
    if u.shape[0] < m:
        raise ValueError(f"sequence of length {u.shape[0]} is shorter than the block length {m}")
    keys = _window_keys(quantize(u, spec), m, spec.b)
    uniq, counts = np.unique(keys, return_counts=True)
    total = keys.shape[0]
    return {_decode_key(k, m, spec.b): c / total for k, c in zip(uniq, counts)}


@dataclass(frozen=True, eq=False)
class WeightTable:
    """Sparse map from quantized blocks to weights in bits.

    Blocks not stored carry ``default_weight``, which is never smaller than
    a stored weight.  Keys are kept as an ``(nnz, m)`` integer array sorted
    by block code, weights as a parallel float array.
    """

    b: int
    m: int
    keys: np.ndarray
    weights: np.ndarray
    default_weight: float
    _codes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        keys = np.asarray(self.keys, dtype=np.int64).reshape(-1, self.m)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if keys.shape[0] != weights.shape[0]:
            raise ValueError("keys and weights differ in length")
        if keys.size and (keys.min() < 0 or keys.max() >= (1 << self.b)):
            raise ValueError("block entries must be valid bin indices")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        if weights.size and self.default_weight < weights.max():
            raise ValueError("default weight must be at least every stored weight")
        codes = np.zeros(keys.shape[0], dtype=np.int64)
        for j in range(self.m):
            codes = (codes << self.b) | keys[:, j]
        order = np.argsort(codes, kind="stable")
        if np.any(np.diff(codes[order]) == 0):
            raise ValueError("duplicate block in weight table")
        keys, weights = keys[order], weights[order]
        keys.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "_codes", codes[order])
        object.__setattr__(self, "default_weight", float(self.default_weight))

    @property
    def spec(self) -> QuantSpec:
        return QuantSpec(self.b)

    def __len__(self):
        return self.keys.shape[0]

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(v) for v in k): float(w) for k, w in zip(self.keys, self.weights)}

    def lookup_codes(self, codes: np.ndarray) -> np.ndarray:
        """Weights for integer block codes (first symbol most significant)."""
        codes = np.asarray(codes, dtype=np.int64)
        pos = np.searchsorted(self._codes, codes)
        pos_c = np.minimum(pos, max(len(self._codes) - 1, 0))
        out = np.full(codes.shape, self.default_weight)
        if len(self._codes):
            hit = self._codes[pos_c] == codes
            out[hit] = self.weights[pos_c[hit]]
        return out

    def weight(self, block) -> float:
        block = tuple(int(a) for a in block)
        if len(block) != self.m:
            raise ValueError(f"expected a block of length {self.m}")
        code = 0
        for a in block:
            code = (code << self.b) | a
        return float(self.lookup_codes(np.array([code]))[0])

    def dense(self) -> np.ndarray:
        """Full ``(2**b,)*m`` weight array; only sensible for small ``b*m``."""
        k = 1 << self.b
        out = np.full((k,) * self.m, self.default_weight)
        if len(self):
            out[tuple(self.keys.T)] = self.weights
        return out

    def incoming_csr(self):
        """Stored pair transitions grouped by target bin (``m == 2`` only).

        Returns ``(indptr, src, weight)`` with sources ascending inside each
        target's slice.
        """
        if self.m != 2:
            raise ValueError("transition lists need a pair table")
        k = 1 << self.b
        src, tgt = self.keys[:, 0], self.keys[:, 1]
        order = np.lexsort((src, tgt))
        indptr = np.zeros(k + 1, dtype=np.int64)
        np.add.at(indptr, tgt + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, src[order].astype(np.int64), self.weights[order]

    # -- serialisation -----------------------------------------------------

    def dumps(self) -> str:
        lines = [f"b={self.b} m={self.m} default={self.default_weight!r}"]
        for key, w in zip(self.keys, self.weights):
            lines.append(" ".join(str(int(a)) for a in key) + f" {float(w)!r}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "WeightTable":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not lines:
            raise ValueError("empty weight table")
        header = dict(tok.split("=", 1) for tok in lines[0].split())
        try:
            b, m, default = int(header["b"]), int(header["m"]), float(header["default"])
        except KeyError as exc:
            raise ValueError(f"weight table header lacks {exc}") from None
        rows = [ln.split() for ln in lines[1:]]
        if any(len(r) != m + 1 for r in rows):
            raise ValueError(f"each record needs {m} bin indices and a weight")
        keys = np.array([[int(v) for v in r[:m]] for r in rows], dtype=np.int64).reshape(-1, m)
        weights = np.array([float(r[m]) for r in rows], dtype=np.float64)
        return cls(b, m, keys, weights, default)

    @classmethod
    def load(cls, path) -> "WeightTable":
        return cls.loads(Path(path).read_text())


def weights_from_dist(
    dist: Mapping[tuple[int, ...], float],
    default_mass: float,
    spec: QuantSpec | None = None,
) -> WeightTable:
    """Weight table ``w = -log2 p`` from block probabilities.

    ``default_mass`` is the probability charged to every block missing from
    ``dist``.  Block length is read off the keys; ``spec`` is needed only
    when ``dist`` is empty or to pin the bit depth explicitly.
    """
    if not 0.0 < default_mass <= 1.0:
        raise ValueError("default mass must be a probability in (0, 1]")
    keys = [tuple(int(a) for a in k) for k in dist]
    probs = np.array([float(dist[k]) for k in dist], dtype=np.float64)
    if np.any(~(probs > 0.0)):
        raise ValueError("block probabilities must be positive")
    if probs.sum() > 1.0 + 1e-9:
        raise ValueError("block probabilities sum to more than one")
    if spec is None:
        if not keys:
            raise ValueError("bit depth needed for an empty distribution")
        spec = QuantSpec(max(1, int(max(max(k) for k in keys)).bit_length()))
    m = len(keys[0]) if keys else 1
    if any(len(k) != m for k in keys):
        raise ValueError("all blocks must have the same length")
    weights = -np.log2(probs)
    default = -math.log2(default_mass)
    if weights.size and default < weights.max():
        raise ValueError("default mass exceeds the smallest stored probability")
    return WeightTable(spec.b, m, np.array(keys, dtype=np.int64).reshape(-1, m), weights, default)


def block_cost(u, table: WeightTable) -> float:
    """Sum of the weights of every quantized sliding window of ``u``."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape[0] < table.m:
        raise ValueError(f"sequence shorter than the block length {table.m}")
    keys = _window_keys(quantize(u, table.spec), table.m, table.b)
    return float(table.lookup_codes(keys).sum())


def normalized_regularizer(u_block, table: WeightTable) -> float:
    """Per-block regulariser: weight of the quantized block divided by ``b``."""
    block = np.atleast_1d(np.asarray(u_block, dtype=np.float64))
    if block.shape[0] != table.m:
        raise ValueError(f"expected a block of length {table.m}")
    return table.weight(quantize(block, table.spec)) / table.b
