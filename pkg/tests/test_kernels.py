"""The numba kernels and their numpy fallbacks agree bit for bit."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from qmap import kernels

seeds = st.integers(0, 2**32 - 1)


def _coarse(gen, shape, lo=-0.2, hi=1.2, step=1 / 64):
    # values on a coarse grid so exact ties and bin-edge hits are frequent
    return np.round(gen.uniform(lo, hi, shape) / step) * step


def test_bin_edges():
    lo, hic = kernels.bin_edges(3)
    assert lo[0] == 0.0 and lo[-1] == 0.875
    assert np.all(hic < lo + 1 / 8) and np.all(np.nextafter(hic, 1.0) == lo + 1 / 8)


@given(seeds, st.integers(1, 8))
def test_scalar_search_agrees(seed, b):
    gen = np.random.default_rng(seed)
    lo, hic = kernels.bin_edges(b)
    y = _coarse(gen, 300)
    pen = gen.choice([0.0, 1 / 256, 1 / 64, 0.25], 1 << b)
    assert np.array_equal(kernels._scalar_search_jit(y, pen, lo, hic),
                          kernels._scalar_search_np(y, pen, lo, hic))


@given(seeds, st.integers(1, 6), st.integers(2, 60))
def test_viterbi_agrees(seed, b, n):
    gen = np.random.default_rng(seed)
    k = 1 << b
    lo, hic = kernels.bin_edges(b)
    dense = gen.random((k, k)) < 0.2
    tgt, src = np.nonzero(dense.T)
    indptr = np.concatenate(([0], np.cumsum(dense.sum(axis=0)))).astype(np.int64)
    pen = gen.choice([0.0, 1 / 128, 1 / 32], src.shape[0])
    y = _coarse(gen, n)
    args = (y, lo, hic, indptr, src.astype(np.int64), pen, 1 / 16)
    assert np.array_equal(kernels._viterbi_jit(*args), kernels._viterbi_np(*args))


@given(seeds, st.integers(0, 40))
@settings(max_examples=40)
def test_patch_search_agrees(seed, nstored):
    gen = np.random.default_rng(seed)
    ncoef, ncell = 12, 16
    bp = np.sort(gen.uniform(-1, 1, (ncoef, ncell - 1)), axis=1)
    lo = np.concatenate((np.full((ncoef, 1), -np.inf), bp), axis=1)
    hic = np.concatenate((np.nextafter(bp, -np.inf), np.full((ncoef, 1), np.inf)), axis=1)
    codes = gen.integers(0, ncell, (nstored, ncoef))
    pens = np.sort(gen.choice([0.01, 0.02, 0.05, 0.1], nstored))
    coef = _coarse(gen, (50, ncoef), -1.2, 1.2, 1 / 32)
    own = gen.choice([0.05, 0.1, 0.5], 50)
    a = kernels._patch_search_jit(coef, own, lo, hic, codes, pens)
    b = kernels._patch_search_np(coef, own, lo, hic, codes, pens)
    assert np.array_equal(a, b)


@given(seeds)
@settings(max_examples=30)
def test_markov_path_agrees(seed):
    gen = np.random.default_rng(seed)
    n = 2000
    labels = gen.integers(0, 4, n - 1)
    fresh = gen.random(n)
    kinds = np.array([kernels.BRANCH_IDENTITY, kernels.BRANCH_AFFINE, kernels.BRANCH_TABULATED])
    params = np.array([[0.0, 0.0], [0.5, 0.25], [0.0, 0.0]])
    tables = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.1, 0.9, 0.3]])
    a = kernels._markov_path_jit(labels, fresh, kinds, params, tables)
    b = kernels._markov_path_np(labels, fresh, kinds, params, tables)
    assert np.array_equal(a, b)
    # identity-only fast path
    labs = np.minimum(labels, 1)
    assert np.array_equal(kernels._markov_path_jit(labs, fresh, kinds, params, tables),
                          kernels._markov_path_np(labs, fresh, kinds, params, tables))


def test_branch_values_agree():
    x = np.linspace(0, 1, 101)[:-1]
    for kind, params, table in [(0, np.zeros(2), np.zeros(3)), (1, np.array([0.5, 0.25]), np.zeros(3)),
                                (2, np.zeros(2), np.array([0.1, 0.9, 0.3]))]:
        ref = np.array([kernels._branch_value(kind, params, table, v) for v in x])
        assert np.array_equal(ref, kernels.branch_value_np(kind, params, table, x))
