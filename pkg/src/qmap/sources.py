"""Generative source models, noise, and exact quantized block probabilities.

Two families are covered: i.i.d. spike-and-slab sources (a continuous density
mixed with point masses) and first-order Markov sources in which each symbol
is either a fresh draw from a density or a deterministic Lipschitz function
of its predecessor.
"""

from __future__ import annotations

import configparser
import functools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from . import kernels
from .quantize import QuantSpec, WeightTable, quantize_clamped
from .seeding import rng

_TOP = math.nextafter(1.0, 0.0)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
# subcells per bin when estimating inverse-image masses of branch functions
_SUBCELLS = 64
_BURN_IN_STEPS = 1_000_000


class ModelError(ValueError):
    """Invalid model parameters or model file."""


# ---------------------------------------------------------------------------
# continuous densities on (0, 1)


@dataclass(frozen=True)
class UniformDensity:
    kind = "uniform"

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where((x >= 0) & (x < 1), 1.0, 0.0)

    @property
    def sup(self) -> float:
        return 1.0

    def cdf(self, x):
        return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return gen.random(size)

    def bin_masses(self, spec: QuantSpec) -> np.ndarray:
        return np.full(spec.nbins, spec.width)

    def params(self) -> tuple:
        return ()


@dataclass(frozen=True)
class LinearDensity:
    """Density ``1 + slope (x - 1/2)`` with ``|slope| <= 2``."""

    slope: float
    kind = "linear"

    def __post_init__(self):
        if abs(self.slope) > 2:
            raise ModelError("linear density needs |slope| <= 2")

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where((x >= 0) & (x < 1), 1.0 + self.slope * (x - 0.5), 0.0)

    @property
    def sup(self) -> float:
        return 1.0 + abs(self.slope) / 2

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
        return x + self.slope * (x * x - x) / 2

    def sample(self, gen, size):
        u = gen.random(size)
        s = self.slope
        if abs(s) < 1e-12:
            return u
        # root of s/2 x^2 + (1 - s/2) x - u = 0 inside [0, 1]
        a, bq = s / 2, 1 - s / 2
        x = 2 * u / (bq + np.sqrt(bq * bq + 4 * a * u))
        return np.minimum(x, _TOP)

    def bin_masses(self, spec):
        return _quadrature_bin_masses(self.pdf, spec)

    def params(self):
        return (self.slope,)


@dataclass(frozen=True)
class BetaDensity:
    """Beta(a, b) density; ``a, b >= 1`` keeps it bounded."""

    a: float
    b: float
    kind = "beta"

    def __post_init__(self):
        if self.a < 1 or self.b < 1:
            raise ModelError("beta density needs both shape parameters >= 1")

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = (x >= 0) & (x < 1)
        return np.where(inside, stats.beta.pdf(np.clip(x, 0, 1), self.a, self.b), 0.0)

    @property
    def sup(self) -> float:
        if self.a == 1 and self.b == 1:
            return 1.0
        if self.a == 1 or self.b == 1:
            return float(max(self.a, self.b))
        mode = (self.a - 1) / (self.a + self.b - 2)
        return float(stats.beta.pdf(mode, self.a, self.b))

    def cdf(self, x):
        return stats.beta.cdf(np.clip(np.asarray(x, dtype=np.float64), 0, 1), self.a, self.b)

    def sample(self, gen, size):
        return np.minimum(gen.beta(self.a, self.b, size), _TOP)

    def bin_masses(self, spec):
        return _quadrature_bin_masses(self.pdf, spec)

    def params(self):
        return (self.a, self.b)


def _quadrature_bin_masses(pdf, spec: QuantSpec, bins=None) -> np.ndarray:
    """16-point Gauss-Legendre integral of ``pdf`` over each bin (or the given ones)."""
    lo = (np.arange(spec.nbins) if bins is None else np.asarray(bins)) * spec.width
    half = spec.width / 2
    pts = lo[:, None] + half * (1 + _GL_NODES[None, :])
    return half * (pdf(pts) @ _GL_WEIGHTS)


def make_density(kind: str, params=()):
    kind = kind.strip().lower()
    if kind == "uniform":
        return UniformDensity()
    if kind == "linear":
        return LinearDensity(float(params[0]) if params else 0.0)
    if kind == "beta":
        if len(params) != 2:
            raise ModelError("beta density takes two parameters")
        return BetaDensity(float(params[0]), float(params[1]))
    raise ModelError(f"unknown density kind {kind!r}")


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class SpikeSlabModel:
    """``q0 * density + sum_p q_p * delta(x_p)`` on [0, 1)."""

    q0: float
    atoms: tuple = ()
    density: object = UniformDensity()

    def __post_init__(self):
        atoms = tuple((float(x), float(q)) for x, q in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not 0.0 <= self.q0 <= 1.0:
            raise ModelError("q0 must lie in [0, 1]")
        if any(q <= 0 for _, q in atoms):
            raise ModelError("atom masses must be positive")
        if any(not 0.0 <= x < 1.0 for x, _ in atoms):
            raise ModelError("atom locations must lie in [0, 1)")
        if len({x for x, _ in atoms}) != len(atoms):
            raise ModelError("atom locations must be distinct")
        total = self.q0 + sum(q for _, q in atoms)
        if abs(total - 1.0) > 1e-12:
            raise ModelError(f"masses sum to {total}, not 1")

    @property
    def locations(self) -> np.ndarray:
        return np.array([x for x, _ in self.atoms])

    @property
    def masses(self) -> np.ndarray:
        return np.array([q for _, q in self.atoms])


@dataclass(frozen=True)
class Branch:
    """Deterministic transition ``x -> f(x)`` of a Markov source.

    ``kind`` is ``identity``, ``affine`` (``a x + c``) or ``tabulated``
    (piecewise-linear through ``values`` on an even grid of [0, 1]).
    """

    kind: str
    a: float = 1.0
    c: float = 0.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("identity", "affine", "tabulated"):
            raise ModelError(f"unknown branch kind {self.kind!r}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind == "tabulated" and len(self.values) < 2:
            raise ModelError("tabulated branch needs at least two values")

    @property
    def code(self) -> int:
        return {
            "identity": kernels.BRANCH_IDENTITY,
            "affine": kernels.BRANCH_AFFINE,
            "tabulated": kernels.BRANCH_TABULATED,
        }[self.kind]

    @property
    def lipschitz(self) -> float:
        if self.kind == "identity":
            return 1.0
        if self.kind == "affine":
            return abs(self.a)
        v = np.array(self.values)
        return float(np.max(np.abs(np.diff(v))) * (len(v) - 1))

    def table(self) -> np.ndarray:
        return np.array(self.values if self.kind == "tabulated" else (0.0, 0.0))

    def __call__(self, x):
        return kernels.branch_value_np(self.code, np.array([self.a, self.c]), self.table(), x)


@dataclass(frozen=True)
class MarkovModel:
    """``X_{i+1} | X_i ~ q0 * density + sum_p q_p * delta(f_p(X_i))``."""

    q0: float
    branches: tuple = ()
    density: object = UniformDensity()
    lipschitz: float = 1.0

    def __post_init__(self):
        branches = tuple((f, float(q)) for f, q in self.branches)
        object.__setattr__(self, "branches", branches)
        if not 0.0 <= self.q0 <= 1.0:
            raise ModelError("q0 must lie in [0, 1]")
        if any(q <= 0 for _, q in branches):
            raise ModelError("branch masses must be positive")
        total = self.q0 + sum(q for _, q in branches)
        if abs(total - 1.0) > 1e-12:
            raise ModelError(f"masses sum to {total}, not 1")
        grid = np.linspace(0.0, _TOP, 4097)
        check = rng(12345)
        x, y = check.random(2000), check.random(2000)
        for f, _ in branches:
            img = f(grid)
            if np.any(img < 0) or np.any(img >= 1):
                raise ModelError(f"branch {f.kind} leaves [0, 1)")
            if np.any(np.abs(f(x) - f(y)) > self.lipschitz * np.abs(x - y) * (1 + 1e-9) + 1e-15):
                raise ModelError(f"branch {f.kind} violates the Lipschitz constant {self.lipschitz}")

    def kernel_arrays(self):
        kinds = np.array([f.code for f, _ in self.branches], dtype=np.int64)
        params = np.array([[f.a, f.c] for f, _ in self.branches], dtype=np.float64).reshape(-1, 2)
        width = max([len(f.table()) for f, _ in self.branches] + [2])
        tables = np.zeros((len(self.branches), width))
        for i, (f, _) in enumerate(self.branches):
            t = f.table()
            tables[i, : len(t)] = t
            if f.kind == "tabulated" and len(t) != width:
                raise ModelError("tabulated branches of one model must share a grid")
        return kinds, params, tables

    @property
    def preserves_uniform(self) -> bool:
        """True when the uniform law is stationary (identity branches, uniform density)."""
        return isinstance(self.density, UniformDensity) and all(
            f.kind == "identity" or (f.kind == "affine" and f.a == 1.0 and f.c == 0.0)
            for f, _ in self.branches
        )


def example1_model(q0: float = 0.3) -> SpikeSlabModel:
    """Sparse source: atom at 0 with mass ``1 - q0``, uniform slab."""
    return SpikeSlabModel(q0, ((0.0, 1.0 - q0),) if q0 < 1 else ())


def example2_model(q0: float = 0.1) -> MarkovModel:
    """Piecewise-constant source: keep the previous value with mass ``1 - q0``."""
    return MarkovModel(q0, ((Branch("identity"), 1.0 - q0),) if q0 < 1 else ())


# ---------------------------------------------------------------------------
# sampling and noise


@dataclass(frozen=True)
class NoisyObservation:
    clean: np.ndarray
    noisy: np.ndarray
    sigma: float
    seed: int


def sample_iid(model: SpikeSlabModel, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` symbols and their structure labels (0 = slab, p = atom p)."""
    if n < 1:
        raise ValueError("n must be positive")
    gen = rng(seed)
    probs = np.concatenate(([model.q0], model.masses))
    labels = gen.choice(len(probs), size=n, p=probs / probs.sum())
    fresh = model.density.sample(gen, n)
    x = np.where(labels == 0, fresh, np.concatenate(([0.0], model.locations))[labels])
    return x, labels.astype(np.int64)


def sample_markov(model: MarkovModel, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw a path of length ``n`` started from the density.

    Returns the path and its ``n - 1`` transition labels: label ``p > 0``
    means ``x[i+1] = f_p(x[i])``, label 0 a fresh draw.
    """
    if n < 1:
        raise ValueError("n must be positive")
    gen = rng(seed)
    probs = np.array([model.q0] + [q for _, q in model.branches])
    labels = gen.choice(len(probs), size=n - 1, p=probs / probs.sum()).astype(np.int64)
    fresh = model.density.sample(gen, n)
    kinds, params, tables = model.kernel_arrays()
    x = kernels.markov_path(labels, fresh, kinds, params, tables)
    return x, labels


def corrupt(clean, sigma: float, seed) -> NoisyObservation:
    """Add i.i.d. N(0, sigma^2) noise."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    clean = np.asarray(clean, dtype=np.float64)
    noise = rng(seed).standard_normal(clean.shape)
    return NoisyObservation(clean, clean + sigma * noise, float(sigma), int(seed))


# ---------------------------------------------------------------------------
# analytic block probabilities


def analytic_bin_probs_iid(model: SpikeSlabModel, spec: QuantSpec) -> np.ndarray:
    """Exact mass of every bin under the spike-and-slab law."""
    probs = model.q0 * model.density.bin_masses(spec)
    if model.atoms:
        np.add.at(probs, quantize_clamped(model.locations, spec), model.masses)
    return probs


def analytic_bin_prob_iid(model: SpikeSlabModel, a: int, spec: QuantSpec) -> float:
    if not 0 <= a < spec.nbins:
        raise IndexError(f"bin {a} out of range")
    lo, hi = a * spec.width, (a + 1) * spec.width
    if isinstance(model.density, UniformDensity):
        mass = model.q0 * spec.width
    else:
        mass = model.q0 * float(_quadrature_bin_masses(model.density.pdf, spec, [a])[0])
    return mass + sum(q for x, q in model.atoms if lo <= x < hi)


@functools.lru_cache(maxsize=32)
def stationary_marginal(model: MarkovModel, b: int) -> np.ndarray:
    """Bin masses of the stationary law at ``b`` bits.

    Exact (uniform) when the model preserves the uniform law, otherwise a
    histogram of one seeded long path.
    """
    spec = QuantSpec(b)
    if not model.branches:
        return model.density.bin_masses(spec)
    if model.preserves_uniform:
        return np.full(spec.nbins, spec.width)
    x, _ = sample_markov(model, _BURN_IN_STEPS * 2, seed=20240917)
    hist = np.bincount(quantize_clamped(x[_BURN_IN_STEPS:], spec), minlength=spec.nbins)
    return hist / hist.sum()


def _branch_transfer(f: Branch, spec: QuantSpec):
    """Fraction of each bin mapped into each target bin, as (src, tgt, frac) triples."""
    k = spec.nbins
    mids = (np.arange(k)[:, None] + (np.arange(_SUBCELLS)[None, :] + 0.5) / _SUBCELLS) / k
    tgt = quantize_clamped(f(mids), spec)
    src = np.repeat(np.arange(k), _SUBCELLS)
    code = src * k + tgt.ravel()
    uniq, counts = np.unique(code, return_counts=True)
    return uniq // k, uniq % k, counts / _SUBCELLS


def analytic_pair_matrix(model: MarkovModel, spec: QuantSpec) -> np.ndarray:
    """``P[a1, a2] = P(X_1 in bin a1, X_2 in bin a2)`` under stationarity."""
    mu = stationary_marginal(model, spec.b)
    pc = model.density.bin_masses(spec)
    pair = model.q0 * np.outer(mu, pc)
    for f, q in model.branches:
        s, t, frac = _branch_transfer(f, spec)
        np.add.at(pair, (s, t), q * mu[s] * frac)
    return pair


def analytic_pair_prob_markov(model: MarkovModel, a1: int, a2: int, spec: QuantSpec) -> float:
    k = spec.nbins
    if not (0 <= a1 < k and 0 <= a2 < k):
        raise IndexError("bin index out of range")
    mu = stationary_marginal(model, spec.b)
    pc = model.density.bin_masses(spec)
    p = model.q0 * mu[a1] * pc[a2]
    mids = (a1 + (np.arange(_SUBCELLS) + 0.5) / _SUBCELLS) / k
    for f, q in model.branches:
        frac = np.mean(quantize_clamped(f(mids), spec) == a2)
        p += q * mu[a1] * frac
    return float(p)


# ---------------------------------------------------------------------------
# weight tables


def table_from_probs(probs: np.ndarray, spec: QuantSpec) -> WeightTable:
    """Sparse weight table from a dense array of block probabilities.

    The default mass is the smallest positive probability (the floor every
    unstructured block shares) when all blocks are positive; with zero-mass
    blocks it is the smallest positive double.  Only blocks strictly more
    probable than the default are stored.
    """
    probs = np.asarray(probs, dtype=np.float64)
    m = probs.ndim
    positive = probs > 0
    if np.all(positive):
        default_mass = float(probs.min())
    else:
        default_mass = float(np.finfo(np.float64).tiny)
    stored = probs > default_mass
    idx = np.argwhere(stored)
    weights = -np.log2(probs[stored])
    return WeightTable(spec.b, m, idx.reshape(-1, m), weights, -math.log2(default_mass))


def iid_weight_table(model: SpikeSlabModel, spec: QuantSpec) -> WeightTable:
    return table_from_probs(analytic_bin_probs_iid(model, spec), spec)


def markov_weight_table(model: MarkovModel, spec: QuantSpec) -> WeightTable:
    return table_from_probs(analytic_pair_matrix(model, spec), spec)


def learned_weight_table(u, m: int, spec: QuantSpec) -> WeightTable:
    """Add-one smoothed block weights learned from a clean training sequence."""
    from .quantize import _window_keys

    keys = _window_keys(quantize_clamped(np.asarray(u, dtype=np.float64), spec), m, spec.b)
    uniq, counts = np.unique(keys, return_counts=True)
    denom = keys.shape[0] + float(spec.nbins) ** m
    blocks = np.stack([(uniq >> (spec.b * (m - 1 - j))) & (spec.nbins - 1) for j in range(m)], axis=1)
    return WeightTable(spec.b, m, blocks, -np.log2((counts + 1) / denom), math.log2(denom))


# ---------------------------------------------------------------------------
# model files


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _numbered(cp, prefix):
    names = [n for n in cp.sections() if n.split(".")[0] == prefix]
    return sorted(names, key=lambda n: int(n.split(".", 1)[1]) if "." in n else 0)


def parse_model(text: str):
    """Build a model from an INI-style description.

    ``[model]`` holds ``kind`` (``spike-slab`` or ``markov``), ``q0``,
    ``density`` (``uniform``, ``linear``, ``beta``), ``density_params`` and,
    for Markov sources, ``lipschitz``.  Sections ``[atom.N]`` carry ``x``
    and ``q``; sections ``[branch.N]`` carry ``kind``, ``q`` and ``a``/``c``
    or ``values``.
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ModelError(f"unreadable model description: {exc}") from None
    if "model" not in cp:
        raise ModelError("model description lacks a [model] section")
    sec = cp["model"]
    try:
        kind = sec.get("kind", "spike-slab").strip().lower()
        q0 = sec.getfloat("q0")
        if q0 is None:
            raise ModelError("q0 is required")
        density = make_density(sec.get("density", "uniform"), _floats(sec.get("density_params", "")))
        if kind in ("spike-slab", "iid", "spike_slab"):
            atoms = [
                (cp[name].getfloat("x"), cp[name].getfloat("q"))
                for name in _numbered(cp, "atom")
            ]
            return SpikeSlabModel(q0, tuple(atoms), density)
        if kind == "markov":
            branches = []
            for name in _numbered(cp, "branch"):
                bs = cp[name]
                branches.append(
                    (
                        Branch(
                            bs.get("kind", "identity").strip().lower(),
                            a=bs.getfloat("a", 1.0),
                            c=bs.getfloat("c", 0.0),
                            values=_floats(bs.get("values", "")),
                        ),
                        bs.getfloat("q"),
                    )
                )
            lip = sec.getfloat("lipschitz")
            if lip is None:
                lip = max([f.lipschitz for f, _ in branches] + [1.0])
            return MarkovModel(q0, tuple(branches), density, lip)
    except (TypeError, ValueError) as exc:
        raise ModelError(str(exc)) from None
    raise ModelError(f"unknown model kind {kind!r}")


def load_model(path):
    """Read a model file; I/O problems surface as ``OSError``."""
    return parse_model(Path(path).read_text())


def dump_model(model) -> str:
    """Inverse of :func:`parse_model`."""
    dens = model.density
    lines = ["[model]"]
    if isinstance(model, SpikeSlabModel):
        lines.append("kind = spike-slab")
    else:
        lines.append("kind = markov")
        lines.append(f"lipschitz = {model.lipschitz!r}")
    lines.append(f"q0 = {model.q0!r}")
    lines.append(f"density = {dens.kind}")
    if dens.params():
        lines.append("density_params = " + ", ".join(repr(float(p)) for p in dens.params()))
    if isinstance(model, SpikeSlabModel):
        for i, (x, q) in enumerate(model.atoms, 1):
            lines += ["", f"[atom.{i:03d}]", f"x = {x!r}", f"q = {q!r}"]
    else:
        for i, (f, q) in enumerate(model.branches, 1):
            lines += ["", f"[branch.{i:03d}]", f"kind = {f.kind}", f"q = {q!r}"]
            if f.kind == "affine":
                lines += [f"a = {f.a!r}", f"c = {f.c!r}"]
            if f.kind == "tabulated":
                lines.append("values = " + ", ".join(repr(v) for v in f.values))
    return "\n".join(lines) + "\n"

