"""Error metrics, sweep records and information-dimension estimates."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .quantize import QuantSpec, _window_keys, quantize
from .sources import (
    MarkovModel,
    SpikeSlabModel,
    analytic_bin_probs_iid,
    analytic_pair_matrix,
    sample_iid,
    sample_markov,
)


class InsufficientData(ValueError):
    """Too few samples or bit depths for a stable estimate."""


@dataclass(frozen=True)
class SweepRecord:
    sigma: float
    lam: float
    b: int
    n: int
    trials: int
    mse: float
    ratio: float
    structure_error_rate: float
    stderr: float
    wall_time_s: float
    estimator: str = "qmap"

    def __post_init__(self):
        vals = astuple(self)[:-1]
        if not all(math.isfinite(float(v)) for v in vals):
            raise ValueError(f"non-finite field in sweep record {self!r}")

    @classmethod
    def from_errors(cls, sq_errors, sigma, lam, b, n, structure_error_rate=0.0, wall_time_s=0.0,
                    estimator="qmap"):
        """Summarise per-trial squared errors; ``ratio`` is exactly ``mse / sigma**2``."""
        e = np.asarray(sq_errors, dtype=np.float64)
        trials = e.shape[0]
        if trials == 0:
            raise ValueError("no trials")
        mse_ = float(e.mean())
        sd = float(e.std(ddof=1)) if trials > 1 else 0.0
        return cls(
            sigma=float(sigma),
            lam=float(lam),
            b=int(b),
            n=int(n),
            trials=int(trials),
            mse=mse_,
            ratio=mse_ / sigma**2,
            structure_error_rate=float(structure_error_rate),
            stderr=sd / math.sqrt(trials) / sigma**2,
            wall_time_s=float(wall_time_s),
            estimator=estimator,
        )


CSV_HEADER = ("sigma", "lambda", "b", "n", "trials", "mse", "ratio",
              "structure_error_rate", "stderr", "wall_time_s")


def records_to_csv(records: Iterable[SweepRecord], path=None) -> str:
    """Write records in the sweep CSV schema, rows ordered by (sigma, b).

    Records of different estimators are written to separate files by the
    caller; this writer does not carry the estimator name.
    """
    rows = sorted(records, key=lambda r: (r.sigma, r.b))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([repr(r.sigma), repr(r.lam), r.b, r.n, r.trials, repr(r.mse), repr(r.ratio),
                    repr(r.structure_error_rate), repr(r.stderr), repr(r.wall_time_s)])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def records_from_csv(text: str, estimator: str = "qmap") -> list[SweepRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError("unexpected sweep CSV header")
    out = []
    for row in reader:
        out.append(SweepRecord(
            sigma=float(row["sigma"]), lam=float(row["lambda"]), b=int(row["b"]), n=int(row["n"]),
            trials=int(row["trials"]), mse=float(row["mse"]), ratio=float(row["ratio"]),
            structure_error_rate=float(row["structure_error_rate"]), stderr=float(row["stderr"]),
            wall_time_s=float(row["wall_time_s"]), estimator=estimator,
        ))
    return out


def mse(clean, estimate, select=None) -> float:
    """Mean squared difference over the selected indices.

    ``select`` may be ``None`` (all indices), ``"middle"`` (index ``n // 2``
    only) or anything numpy accepts as an index.
    """
    c = np.asarray(clean, dtype=np.float64)
    e = np.asarray(estimate, dtype=np.float64)
    if c.shape != e.shape:
        raise ValueError(f"length mismatch: {c.shape} vs {e.shape}")
    d = c - e
    if isinstance(select, str):
        if select != "middle":
            raise ValueError(f"unknown selection {select!r}")
        d = d.reshape(-1)[[d.size // 2]]
    elif select is not None:
        d = d[select]
    return float(np.mean(d * d))


def _plugin_entropy(codes: np.ndarray) -> float:
    _, counts = np.unique(codes, return_counts=True)
    p = counts / codes.shape[0]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def entropy_of_quantized(samples, spec: QuantSpec) -> float:
    """Plug-in Shannon entropy in bits of the quantized samples."""
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.shape[0] < 1:
        raise InsufficientData("need at least one sample")
    return _plugin_entropy(quantize(x, spec))


def pair_conditional_entropy(samples, spec: QuantSpec) -> float:
    """``H([X2]_b | [X1]_b)`` from consecutive pairs, as ``H(pair) - H(first)``."""
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.shape[0] < 2:
        raise InsufficientData("need at least two samples")
    bins = quantize(x, spec)
    pairs = _window_keys(bins, 2, spec.b)
    return _plugin_entropy(pairs) - _plugin_entropy(bins[:-1])


def _analytic_entropy(probs: np.ndarray) -> float:
    p = probs[probs > 0]
    return float(-np.sum(p * np.log2(p)))


def _slope(bs, hs) -> float:
    return float(np.polyfit(np.asarray(bs, dtype=np.float64), np.asarray(hs), 1)[0])


def id_slope_estimate(source, b_range: Sequence[int], n: int | None = None, seed=None,
                      method: str = "auto", guard: bool = True) -> float:
    """Least-squares slope of the quantized entropy against ``b``.

    ``source`` is a model or a 1-D sample array.  For i.i.d. models the
    marginal entropy is used; for Markov models (and ``method="pair"``) the
    pairwise conditional entropy ``H([X2]_b | [X1]_b)``.  With a model and
    ``method="analytic"`` the entropies are computed from the model's bin
    (or bin-pair) probabilities instead of sampled.
    """
    bs = [int(b) for b in b_range]
    if len(bs) < 4 or len(set(bs)) != len(bs):
        raise InsufficientData("b_range must span at least four distinct bit depths")
    if method == "auto":
        method = "pair" if isinstance(source, MarkovModel) else "marginal"

    if method == "analytic":
        if isinstance(source, SpikeSlabModel):
            hs = [_analytic_entropy(analytic_bin_probs_iid(source, QuantSpec(b))) for b in bs]
        elif isinstance(source, MarkovModel):
            hs = []
            for b in bs:
                pair = analytic_pair_matrix(source, QuantSpec(b))
                hs.append(_analytic_entropy(pair.ravel()) - _analytic_entropy(pair.sum(axis=1)))
        else:
            raise ValueError("analytic entropies need a model")
        return _slope(bs, hs)

    if isinstance(source, (SpikeSlabModel, MarkovModel)):
        if n is None or seed is None:
            raise ValueError("sampling a model needs n and a seed")
        if isinstance(source, MarkovModel):
            x, _ = sample_markov(source, n, seed)
        else:
            x, _ = sample_iid(source, n, seed)
    else:
        x = np.asarray(source, dtype=np.float64).reshape(-1)
    if guard and x.shape[0] < 100 * (1 << max(bs)):
        raise InsufficientData(
            f"{x.shape[0]} samples are too few for b={max(bs)} (need {100 * (1 << max(bs))})")
    if method == "pair":
        hs = [pair_conditional_entropy(x, QuantSpec(b)) for b in bs]
    elif method == "marginal":
        hs = [entropy_of_quantized(x, QuantSpec(b)) for b in bs]
    else:
        raise ValueError(f"unknown method {method!r}")
    return _slope(bs, hs)


@dataclass(frozen=True)
class RatioPoint:
    sigma: float
    ratio: float
    stderr: float


def ratio_curve(records: Sequence[SweepRecord]) -> list[RatioPoint]:
    """Ratio against sigma, largest sigma first, with Monte Carlo standard errors."""
    if len({(r.b, r.estimator) for r in records}) > 1:
        raise ValueError("records mix bit depths or estimators")
    pts = [RatioPoint(r.sigma, r.ratio, r.stderr) for r in records]
    return sorted(pts, key=lambda p: -p.sigma)


def decreasing_within(points: Sequence[RatioPoint], k: float = 2.0) -> bool:
    """True when each ratio is no larger than its predecessor plus ``k`` joint standard errors."""
    for a, b in zip(points, points[1:]):
        if b.ratio > a.ratio + k * math.hypot(a.stderr, b.stderr):
            return False
    return True


def psnr(reference, test, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    r = np.asarray(reference, dtype=np.float64)
    t = np.asarray(test, dtype=np.float64)
    if r.shape != t.shape:
        raise ValueError(f"dimension mismatch: {r.shape} vs {t.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    m = float(np.mean((r - t) ** 2))
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / m)


__all__ = [
    "InsufficientData", "SweepRecord", "CSV_HEADER", "records_to_csv", "records_from_csv", "mse",
    "entropy_of_quantized", "pair_conditional_entropy", "id_slope_estimate", "RatioPoint",
    "ratio_curve", "decreasing_within", "psnr",
]
