"""Q-MAP solvers, brute-force oracle and reference estimators.

The objective for a bin-valued candidate is

    sum_i (y_i - u_i)^2  +  lam * sum_blocks w(block) / b

(the ``/ b`` is dropped when ``normalize`` is off).  Inside a bin the
regulariser is constant, so for a fixed bin sequence the best ``u_i`` is the
clamp of ``y_i`` into its bin; the search only ever runs over bins.

Tie-breaks
----------
Block length 1: the bin holding ``clamp(y, [0, 1))`` wins ties, then the
lowest bin index.  Block length 2 and above: among optimal bin paths the one
that is smallest when read from the last symbol backwards (last bin lowest,
then second-to-last, ...) is returned.  Costs are accumulated in one fixed
order (``e_0 + t_01 + e_1 + t_12 + ...``) by every solver so optimal paths
compare bit for bit.  In floating point two paths can reach the same total
while their running sums differ below the last bit; walking backwards, the
smaller running cost before each symbol is preferred before the bin index,
which is exactly what backtracking a Viterbi table does.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import kernels
from .quantize import QuantSpec, WeightTable
from .sources import MarkovModel, SpikeSlabModel, UniformDensity

_TOP = math.nextafter(1.0, 0.0)
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


class InstanceTooLarge(ValueError):
    """Brute-force search refused: the bin-path space is too big."""


@dataclass(frozen=True)
class DenoiseConfig:
    lam: float
    weights: WeightTable
    normalize: bool = True
    model: object = None

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")

    @classmethod
    def for_sigma(cls, sigma: float, weights: WeightTable, **kw) -> "DenoiseConfig":
        """Config with the high-SNR rule ``lam = sigma ** 1.5``."""
        return cls(float(sigma) ** 1.5, weights, **kw)

    @property
    def spec(self) -> QuantSpec:
        return self.weights.spec

    @property
    def scale(self) -> float:
        """Multiplier applied to raw weights inside the objective."""
        return self.lam / self.weights.b if self.normalize else self.lam


@dataclass(frozen=True)
class DenoiseResult:
    estimate: np.ndarray
    bins: np.ndarray
    fidelity_cost: float
    regularizer_cost: float
    total_cost: float
    recovered_structure: np.ndarray | None = None


def _project(y: np.ndarray, bins: np.ndarray, spec: QuantSpec) -> np.ndarray:
    lo, hic = kernels.bin_edges(spec.b)
    return np.minimum(np.maximum(y, lo[bins]), hic[bins])


def _emissions(y: np.ndarray, spec: QuantSpec) -> np.ndarray:
    """``(n, 2**b)`` squared distance from each ``y_i`` to each bin."""
    lo, hic = kernels.bin_edges(spec.b)
    u = np.minimum(np.maximum(y[:, None], lo), hic)
    d = y[:, None] - u
    return d * d


def _block_codes(bins: np.ndarray, m: int, nbits: int) -> np.ndarray:
    """Codes of the length-``m`` windows along the last axis of ``bins``."""
    n = bins.shape[-1]
    codes = np.zeros(bins.shape[:-1] + (n - m + 1,), dtype=np.int64)
    for j in range(m):
        codes = (codes << nbits) | bins[..., j : n - m + 1 + j]
    return codes


def _path_cost(emis: np.ndarray, pens: np.ndarray, m: int, trace: list | None = None) -> np.ndarray:
    """Objective of bin paths in the canonical accumulation order.

    ``emis`` is ``(..., n)`` per-symbol distances, ``pens`` is
    ``(..., n - m + 1)`` scaled block weights.  The block ending at symbol
    ``i`` is added just before that symbol's distance.  When ``trace`` is a
    list, the running cost just before each distance ``e_i`` (``i >= 1``) is
    appended to it.
    """
    n = emis.shape[-1]
    cost = emis[..., 0].copy()
    if m == 1:
        cost = cost + pens[..., 0]
    for i in range(1, n):
        if i >= m - 1:
            cost = cost + pens[..., i - m + 1]
        if trace is not None:
            trace.append(cost)
        cost = cost + emis[..., i]
    return cost


def _result(y, bins, cfg: DenoiseConfig, total=None) -> DenoiseResult:
    spec = cfg.spec
    est = _project(y, bins, spec)
    d = y - est
    emis = d * d
    raw = cfg.weights.lookup_codes(_block_codes(bins, cfg.weights.m, spec.b))
    if total is None:
        total = float(_path_cost(emis, cfg.scale * raw, cfg.weights.m))
    reg = float(raw.sum()) / (spec.b if cfg.normalize else 1)
    structure = None
    if cfg.model is not None:
        structure = recover_structure(est, cfg.model, spec)
    return DenoiseResult(est, bins, float(emis.sum()), reg, total, structure)


def qmap_scalar(y, cfg: DenoiseConfig) -> DenoiseResult:
    """Symbol-by-symbol Q-MAP for block length 1 (exact search over all bins)."""
    if cfg.weights.m != 1:
        raise ValueError("the scalar solver needs a block-length-1 weight table")
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    lo, hic = kernels.bin_edges(cfg.spec.b)
    pen = cfg.scale * cfg.weights.dense()
    bins = kernels.scalar_search(y, pen, lo, hic)
    return _result(y, bins, cfg)


def qmap_markov_dp(y, cfg: DenoiseConfig) -> DenoiseResult:
    """Exact pairwise Q-MAP by dynamic programming over the ``2**b`` bins.

    Runs in ``O(n (2**b + stored pairs))``: every state gets one aggregate
    candidate from the cheapest predecessor at the default weight, plus its
    stored incoming transitions.
    """
    if cfg.weights.m != 2:
        raise ValueError("the dynamic programme needs a pair weight table")
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] < 2:
        raise ValueError("need a sequence of length at least 2")
    lo, hic = kernels.bin_edges(cfg.spec.b)
    indptr, src, w = cfg.weights.incoming_csr()
    scale = cfg.scale
    bins = kernels.viterbi(y, lo, hic, indptr, src, scale * w, scale * cfg.weights.default_weight)
    return _result(y, bins, cfg)


def brute_force_qmap(y, cfg: DenoiseConfig, max_bits: int = 20) -> DenoiseResult:
    """Exhaustive search over bin sequences (testing oracle).

    Block length 1 is separable, so each symbol is searched over its own
    ``2**b`` bins.  Longer blocks enumerate all ``2**(b n)`` paths, refused
    when ``b n`` exceeds ``max_bits``.
    """
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    spec, m = cfg.spec, cfg.weights.m
    n = y.shape[0]
    k = spec.nbins
    if n < m:
        raise ValueError("sequence shorter than the block length")
    emis = _emissions(y, spec)
    if m == 1:
        if spec.b > max_bits:
            raise InstanceTooLarge(f"b={spec.b} exceeds the brute-force guard")
        cost = emis + cfg.scale * cfg.weights.dense()[None, :]
        own = (np.clip(y, 0.0, _TOP) * k).astype(np.int64)
        rows = np.arange(n)
        best = cost.min(axis=1)
        bins = np.where(cost[rows, own] == best, own, np.argmin(cost, axis=1))
        return _result(y, bins, cfg)
    if spec.b * n > max_bits:
        raise InstanceTooLarge(f"b*n={spec.b * n} exceeds the brute-force guard of {max_bits}")
    idx = np.arange(k**n, dtype=np.int64)
    paths = np.stack([(idx // k**i) % k for i in range(n)], axis=1)
    pens = cfg.scale * cfg.weights.lookup_codes(_block_codes(paths, m, spec.b))
    e = emis[np.arange(n)[None, :], paths]
    running = []
    cost = _path_cost(e, pens, m, running)
    # priority: total, last bin, running cost before the last symbol, the bin
    # before it, ... (np.lexsort takes the primary key last)
    keys = [paths[:, 0]]
    for i in range(1, n):
        keys += [running[i - 1], paths[:, i]]
    keys.append(cost)
    best = int(np.lexsort(keys)[0])
    return _result(y, paths[best].astype(np.int64), cfg, total=float(cost[best]))


def denoise_many(solver, ys, cfg: DenoiseConfig, workers: int | None = None) -> list[DenoiseResult]:
    """Apply ``solver`` to independent sequences, in threads when ``workers > 1``.

    The jitted kernels release the GIL, so threads run them concurrently.
    """
    ys = list(ys)
    if not workers or workers <= 1:
        return [solver(y, cfg) for y in ys]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda y: solver(y, cfg), ys))


# ---------------------------------------------------------------------------
# baselines and structure


def hard_threshold_scalar(y, t: float):
    """0 when ``|y| <= t``, otherwise ``y`` clamped into [0, 1)."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    y = np.asarray(y, dtype=np.float64)
    out = np.where(np.abs(y) <= t, 0.0, np.clip(y, 0.0, _TOP))
    return float(out) if out.ndim == 0 else out


def _log_ndtr_diff(lo, hi):
    """``log(Phi(hi) - Phi(lo))`` for ``lo < hi`` without cancellation."""
    lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
    out = np.empty(lo.shape)
    upper = lo > 0
    lower = hi < 0
    mid = ~(upper | lower)
    la, lb = special.log_ndtr(-lo[upper]), special.log_ndtr(-hi[upper])
    out[upper] = la + np.log1p(-np.exp(lb - la))
    la, lb = special.log_ndtr(hi[lower]), special.log_ndtr(lo[lower])
    out[lower] = la + np.log1p(-np.exp(lb - la))
    out[mid] = np.log1p(-special.ndtr(lo[mid]) - special.ndtr(-hi[mid]))
    return out


def _continuous_posterior(y, sigma, density):
    """Log marginal of the slab part and its posterior mean, per observation."""
    if isinstance(density, UniformDensity):
        a = (0.0 - y) / sigma
        b = (1.0 - y) / sigma
        logz = _log_ndtr_diff(a, b)
        # truncated-normal mean: y + sigma (phi(a) - phi(b)) / Z
        lpa = -0.5 * a * a - _LOG_SQRT_2PI
        lpb = -0.5 * b * b - _LOG_SQRT_2PI
        mean = y + sigma * (np.exp(lpa - logz) - np.exp(lpb - logz))
        return logz, np.clip(mean, 0.0, 1.0)
    panels = max(64, int(math.ceil(8.0 / sigma)))
    nodes, wts = np.polynomial.legendre.leggauss(16)
    edges = np.arange(panels) / panels
    x = (edges[:, None] + (nodes[None, :] + 1) / (2 * panels)).ravel()
    w = np.tile(wts / (2 * panels), panels)
    with np.errstate(divide="ignore"):
        logpi = np.log(density.pdf(x)) + np.log(w)
    logk = logpi[None, :] - 0.5 * ((y[:, None] - x[None, :]) / sigma) ** 2 - _LOG_SQRT_2PI - math.log(sigma)
    logz = special.logsumexp(logk, axis=1)
    mean = np.exp(special.logsumexp(logk, axis=1, b=x[None, :]) - logz)
    return logz, mean


def mmse_scalar(y, model: SpikeSlabModel, sigma: float):
    """Posterior mean ``E[X | Y = y]`` for a spike-and-slab prior in Gaussian noise."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
    logs, means = [], []
    if model.q0 > 0:
        logz, mean = _continuous_posterior(arr, sigma, model.density)
        logs.append(math.log(model.q0) + logz)
        means.append(mean)
    for x, q in model.atoms:
        logs.append(math.log(q) - 0.5 * ((arr - x) / sigma) ** 2 - _LOG_SQRT_2PI - math.log(sigma))
        means.append(np.full(arr.shape, x))
    logs = np.stack(logs)
    post = np.exp(logs - special.logsumexp(logs, axis=0))
    out = (post * np.stack(means)).sum(axis=0)
    return float(out[0]) if np.ndim(y) == 0 else out


def structure_distance(u, model) -> np.ndarray:
    """Distance from ``u`` to the nearest atom of a spike-and-slab model."""
    if not model.atoms:
        raise ValueError("model has no atoms")
    u = np.asarray(u, dtype=np.float64)
    d = np.min(np.abs(u[..., None] - model.locations), axis=-1)
    return float(d) if d.ndim == 0 else d


def structure_distance_pair(u1, u2, model: MarkovModel):
    """``min_p |u2 - f_p(u1)|`` over the branches of a Markov model."""
    if not model.branches:
        raise ValueError("model has no branches")
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    d = np.min(np.stack([np.abs(u2 - f(u1)) for f, _ in model.branches]), axis=0)
    return float(d) if d.ndim == 0 else d


def recover_structure(estimate, model, spec: QuantSpec) -> np.ndarray:
    """Structure labels read off an estimate.

    Spike-and-slab: symbol ``i`` gets the (1-based) index of the nearest atom
    when it lies within ``2**-b`` of it, else 0.  Markov: transition ``i``
    gets the nearest branch ``p`` when ``|u_{i+1} - f_p(u_i)|`` is within
    ``(L + 1) 2**-b``, else 0 (a break).
    """
    est = np.asarray(estimate, dtype=np.float64)
    if isinstance(model, SpikeSlabModel):
        if not model.atoms:
            return np.zeros(est.shape, dtype=np.int64)
        dist = np.abs(est[:, None] - model.locations[None, :])
        near = np.argmin(dist, axis=1)
        return np.where(dist[np.arange(est.shape[0]), near] < spec.width, near + 1, 0)
    if not model.branches:
        return np.zeros(max(est.shape[0] - 1, 0), dtype=np.int64)
    dist = np.stack([np.abs(est[1:] - f(est[:-1])) for f, _ in model.branches], axis=1)
    near = np.argmin(dist, axis=1)
    tol = (model.lipschitz + 1) * spec.width
    return np.where(dist[np.arange(dist.shape[0]), near] <= tol, near + 1, 0)
