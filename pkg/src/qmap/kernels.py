"""Hot loops of the package, each in a numba and a numpy flavour.

Both flavours of a kernel perform the same floating point operations in the
same order, so they agree bit for bit (including tie-breaks).  The public
names at the bottom of the module dispatch on ``_accel.USE_NUMBA``.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# branch kinds understood by the Markov path kernel
BRANCH_IDENTITY = 0
BRANCH_AFFINE = 1
BRANCH_TABULATED = 2


def bin_edges(nbits):
    """Lower edges and largest in-bin values of the ``2**nbits`` bins of [0, 1)."""
    k = 1 << nbits
    lo = np.arange(k, dtype=np.float64) / k
    hic = np.nextafter(lo + 1.0 / k, 0.0)
    return lo, hic


# ---------------------------------------------------------------------------
# scalar Q-MAP search (block length 1)


@njit
def _scalar_search_jit(y, pen, lo, hic):
    n = y.shape[0]
    k = pen.shape[0]
    top = hic[k - 1]
    bins = np.empty(n, dtype=np.int64)
    for i in range(n):
        yi = y[i]
        yc = min(max(yi, 0.0), top)
        own = int(yc * k)
        u = min(max(yi, lo[own]), hic[own])
        d = yi - u
        best = d * d + pen[own]
        best_a = own
        for a in range(k):
            u = min(max(yi, lo[a]), hic[a])
            d = yi - u
            c = d * d + pen[a]
            if c < best:
                best = c
                best_a = a
        bins[i] = best_a
    return bins


def _scalar_search_np(y, pen, lo, hic, chunk=2048):
    n = y.shape[0]
    k = pen.shape[0]
    top = hic[k - 1]
    bins = np.empty(n, dtype=np.int64)
    for start in range(0, n, chunk):
        yy = y[start:start + chunk]
        own = (np.minimum(np.maximum(yy, 0.0), top) * k).astype(np.int64)
        u = np.minimum(np.maximum(yy[:, None], lo), hic)
        d = yy[:, None] - u
        cost = d * d + pen
        first = np.argmin(cost, axis=1)
        rows = np.arange(yy.shape[0])
        keep_own = cost[rows, own] <= cost[rows, first]
        bins[start:start + chunk] = np.where(keep_own, own, first)
    return bins


# ---------------------------------------------------------------------------
# pairwise dynamic programme (block length 2)


@njit
def _viterbi_jit(y, lo, hic, indptr, src, pen, pen_default):
    n = y.shape[0]
    k = lo.shape[0]
    back = np.empty((n, k), dtype=np.int32)
    v = np.empty(k)
    vn = np.empty(k)
    for a in range(k):
        u = min(max(y[0], lo[a]), hic[a])
        d = y[0] - u
        v[a] = d * d
    for i in range(1, n):
        am = 0
        for a in range(1, k):
            if v[a] < v[am]:
                am = a
        agg = v[am] + pen_default
        # a slightly larger v can round to the same aggregate; the lowest such index wins
        for a in range(am):
            if v[a] + pen_default == agg:
                am = a
                break
        yi = y[i]
        for t in range(k):
            bc = agg
            ba = am
            for j in range(indptr[t], indptr[t + 1]):
                s = src[j]
                c = v[s] + pen[j]
                if c < bc or (c == bc and s < ba):
                    bc = c
                    ba = s
            u = min(max(yi, lo[t]), hic[t])
            d = yi - u
            vn[t] = bc + d * d
            back[i, t] = ba
        for t in range(k):
            v[t] = vn[t]
    path = np.empty(n, dtype=np.int64)
    last = 0
    for a in range(1, k):
        if v[a] < v[last]:
            last = a
    path[n - 1] = last
    for i in range(n - 1, 0, -1):
        path[i - 1] = back[i, path[i]]
    return path


def _viterbi_np(y, lo, hic, indptr, src, pen, pen_default):
    n = y.shape[0]
    k = lo.shape[0]
    trans = np.full((k, k), pen_default)
    tgt = np.repeat(np.arange(k), np.diff(indptr))
    trans[src, tgt] = pen
    cols = np.arange(k)
    u = np.minimum(np.maximum(y[:, None], lo), hic)
    d = y[:, None] - u
    emis = d * d
    back = np.empty((n, k), dtype=np.int32)
    v = emis[0].copy()
    for i in range(1, n):
        m = v[:, None] + trans
        ba = np.argmin(m, axis=0)
        back[i] = ba
        v = m[ba, cols] + emis[i]
    path = np.empty(n, dtype=np.int64)
    path[n - 1] = np.argmin(v)
    for i in range(n - 1, 0, -1):
        path[i - 1] = back[i, path[i]]
    return path


# ---------------------------------------------------------------------------
# codeword search for the patch denoiser


@njit
def _patch_search_jit(coef, own_pen, cell_lo, cell_hic, codes, pens):
    npatch, ncoef = coef.shape
    nstored = codes.shape[0]
    choice = np.full(npatch, -1, dtype=np.int64)
    for p in range(npatch):
        best = own_pen[p]
        for s in range(nstored):
            if pens[s] >= best:
                break
            c = pens[s]
            for j in range(ncoef):
                cell = codes[s, j]
                v = coef[p, j]
                u = min(max(v, cell_lo[j, cell]), cell_hic[j, cell])
                d = v - u
                c += d * d
                if c >= best:
                    break
            if c < best:
                best = c
                choice[p] = s
    return choice


def _patch_search_np(coef, own_pen, cell_lo, cell_hic, codes, pens, chunk=64):
    npatch, ncoef = coef.shape
    choice = np.full(npatch, -1, dtype=np.int64)
    if codes.shape[0] == 0:
        return choice
    lo = [cell_lo[j, codes[:, j]] for j in range(ncoef)]
    hi = [cell_hic[j, codes[:, j]] for j in range(ncoef)]
    for start in range(0, npatch, chunk):
        cc = coef[start:start + chunk]
        acc = np.broadcast_to(pens, (cc.shape[0], pens.shape[0])).copy()
        for j in range(ncoef):
            v = cc[:, j:j + 1]
            u = np.minimum(np.maximum(v, lo[j]), hi[j])
            d = v - u
            acc += d * d
        first = np.argmin(acc, axis=1)
        rows = np.arange(cc.shape[0])
        better = acc[rows, first] < own_pen[start:start + chunk]
        choice[start:start + chunk] = np.where(better, first, -1)
    return choice


# ---------------------------------------------------------------------------
# Markov path generation


@njit
def _branch_value(kind, params, table, x):
    if kind == 0:
        return x
    if kind == 1:
        return params[0] * x + params[1]
    g = table.shape[0] - 1
    pos = x * g
    j = int(pos)
    if j >= g:
        j = g - 1
    frac = pos - j
    return table[j] + frac * (table[j + 1] - table[j])


@njit
def _markov_path_jit(labels, fresh, kinds, params, tables):
    n = fresh.shape[0]
    x = np.empty(n)
    x[0] = fresh[0]
    for i in range(n - 1):
        p = labels[i]
        if p == 0:
            x[i + 1] = fresh[i + 1]
        else:
            x[i + 1] = _branch_value(kinds[p - 1], params[p - 1], tables[p - 1], x[i])
    return x


def branch_value_np(kind, params, table, x):
    """Vectorised twin of the jitted branch evaluation."""
    x = np.asarray(x, dtype=np.float64)
    if kind == BRANCH_IDENTITY:
        return x.copy()
    if kind == BRANCH_AFFINE:
        return params[0] * x + params[1]
    g = table.shape[0] - 1
    pos = x * g
    j = np.minimum(pos.astype(np.int64), g - 1)
    frac = pos - j
    return table[j] + frac * (table[j + 1] - table[j])


def _markov_path_np(labels, fresh, kinds, params, tables):
    n = fresh.shape[0]
    used = np.unique(labels[labels > 0])
    if np.all(kinds[used - 1] == BRANCH_IDENTITY):
        # identity-only paths are piecewise constant: carry the last fresh draw forward
        starts = np.concatenate(([True], labels == 0))
        idx = np.maximum.accumulate(np.where(starts, np.arange(n), 0))
        return fresh[idx]
    x = np.empty(n)
    x[0] = fresh[0]
    for i in range(n - 1):
        p = labels[i]
        if p == 0:
            x[i + 1] = fresh[i + 1]
        else:
            x[i + 1] = branch_value_np(kinds[p - 1], params[p - 1], tables[p - 1], x[i])
    return x


if USE_NUMBA:
    scalar_search = _scalar_search_jit
    viterbi = _viterbi_jit
    patch_search = _patch_search_jit
    markov_path = _markov_path_jit
else:
    scalar_search = _scalar_search_np
    viterbi = _viterbi_np
    patch_search = _patch_search_np
    markov_path = _markov_path_np

BACKEND = "numba" if USE_NUMBA else "numpy"
