"""Two-level orthonormal Haar transform of 4x4 patches and the codeword layout.

The 1-D basis is the two-level Haar analysis on four samples; the 2-D
transform is its tensor product, ``C = H P H^T``.  Coefficient ``(i, j)``
has total frequency ``i + j``.
"""

import numpy as np

_S = np.sqrt(0.5)
H4 = np.array(
    [
        [0.5, 0.5, 0.5, 0.5],
        [0.5, 0.5, -0.5, -0.5],
        [_S, -_S, 0.0, 0.0],
        [0.0, 0.0, _S, -_S],
    ]
)

FREQ = np.add.outer(np.arange(4), np.arange(4))

# bits per coefficient by total frequency; 0 means pass-through
FREQ_BITS = {1: 4, 2: 3, 3: 2, 4: 1}

BITS = np.vectorize(lambda f: FREQ_BITS.get(int(f), 0))(FREQ).astype(np.int64)

# quantized coefficients in row-major order; the first is most significant
QPOS = np.argwhere(BITS > 0)
QFLAT = QPOS[:, 0] * 4 + QPOS[:, 1]
QBITS = BITS[QPOS[:, 0], QPOS[:, 1]]
SHIFTS = np.concatenate((np.cumsum(QBITS[::-1])[::-1][1:], [0])).astype(np.int64)
TOTAL_BITS = int(QBITS.sum())
NCODES = 1 << TOTAL_BITS


def dwt2(patch):
    """Forward transform of one ``(4, 4)`` patch or a stack ``(..., 4, 4)``."""
    p = np.asarray(patch, dtype=np.float64)
    if p.shape[-2:] != (4, 4):
        raise ValueError(f"expected 4x4 patches, got shape {p.shape}")
    return H4 @ p @ H4.T


def idwt2(coef):
    c = np.asarray(coef, dtype=np.float64)
    if c.shape[-2:] != (4, 4):
        raise ValueError(f"expected 4x4 coefficients, got shape {c.shape}")
    return H4.T @ c @ H4


def pack(cells) -> np.ndarray:
    """Codewords from per-coefficient cell indices ``(..., 12)``."""
    cells = np.asarray(cells, dtype=np.int64)
    return np.bitwise_or.reduce(cells << SHIFTS, axis=-1)


def unpack(codes) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    return (codes[..., None] >> SHIFTS) & ((1 << QBITS) - 1)
