"""Time the numba kernels against their numpy fallbacks and check they agree.

    python benchmarks/bench_kernels.py [--repeat 3]

Both flavours are called directly, so the QMAP_NUMBA setting does not
matter here.  Compilation is excluded from the timings (one warm-up call).
"""

import argparse
import time

import numpy as np

from qmap import kernels
from qmap._accel import HAVE_NUMBA
from qmap.image import codec, corpus, haar
from qmap.image.denoise import _SearchTables, extract_patches
from qmap.quantize import QuantSpec
from qmap.sources import SpikeSlabModel, UniformDensity, example2_model, iid_weight_table, markov_weight_table


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases():
    gen = np.random.default_rng(0)

    # scalar search, b = 12, 20k observations
    model = SpikeSlabModel(0.3, ((0.5, 0.7),), UniformDensity())
    table = iid_weight_table(model, QuantSpec(12))
    lo, hic = kernels.bin_edges(12)
    pen = 0.01 ** 1.5 / 12 * table.dense()
    y = np.where(gen.random(20000) < 0.7, 0.5, gen.random(20000)) + 0.01 * gen.standard_normal(20000)
    yield "scalar_search b=12 n=2e4", (y, pen, lo, hic), kernels._scalar_search_jit, kernels._scalar_search_np

    # Viterbi, b = 8, n = 256
    m2 = example2_model(0.1)
    t2 = markov_weight_table(m2, QuantSpec(8))
    indptr, src, w = t2.incoming_csr()
    s = 0.02 ** 1.5 / 8
    lo8, hic8 = kernels.bin_edges(8)
    x = np.repeat(gen.random(26), 10)[:256]
    yv = x + 0.02 * gen.standard_normal(256)
    yield ("viterbi b=8 n=256", (yv, lo8, hic8, indptr, src, s * w, s * t2.default_weight),
           kernels._viterbi_jit, kernels._viterbi_np)

    # patch search on a 64x64 crop of the test image with a trained prior
    prior = codec.train_prior(corpus.training_tiles()[:120], 128, seed=1)
    img = corpus.test_image().samples[:64, :64]
    noisy = np.clip(img + 25 / 255 * gen.standard_normal(img.shape), 0, 1)
    patches, _, _ = extract_patches(noisy, 1)
    tabs = _SearchTables(prior, 0.04)
    q = np.ascontiguousarray(codec.quantized_coeffs(haar.dwt2(patches)))
    own = tabs.lam * prior.weight(haar.pack(codec.cells_of(q, prior.breakpoints)))
    yield ("patch_search 3721 patches", (q, own, tabs.lo, tabs.hic, tabs.cells, tabs.pens),
           kernels._patch_search_jit, kernels._patch_search_np)

    # Markov path generation, n = 1e6, one affine branch
    n = 1_000_000
    labels = (gen.random(n - 1) >= 0.1).astype(np.int64)
    fresh = gen.random(n)
    kinds = np.array([kernels.BRANCH_AFFINE], dtype=np.int64)
    params = np.array([[0.5, 0.25]])
    tables = np.zeros((1, 2))
    yield ("markov_path n=1e6 affine", (labels, fresh, kinds, params, tables),
           kernels._markov_path_jit, kernels._markov_path_np)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy flavour can run")
    print(f"{'kernel':32s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}  agree")
    for name, inputs, jit, npy in cases():
        jit(*inputs)
        tj, oj = best_of(lambda: jit(*inputs), args.repeat)
        tn, on = best_of(lambda: npy(*inputs), args.repeat)
        agree = np.array_equal(oj, on)
        print(f"{name:32s} {tj:10.4f} {tn:10.4f} {tn / tj:8.1f}  {agree}")


if __name__ == "__main__":
    main()
