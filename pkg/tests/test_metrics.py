import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmap.metrics import (
    CSV_HEADER,
    InsufficientData,
    RatioPoint,
    SweepRecord,
    decreasing_within,
    entropy_of_quantized,
    id_slope_estimate,
    mse,
    pair_conditional_entropy,
    psnr,
    ratio_curve,
    records_from_csv,
    records_to_csv,
)
from qmap.quantize import QuantSpec
from qmap.sources import SpikeSlabModel, UniformDensity, example2_model


def test_mse_examples():
    x = np.array([0.1, 0.4, 0.7])
    assert mse(x, x) == 0.0
    assert mse(np.zeros(6), np.full(6, 0.3)) == pytest.approx(0.09)
    clean = np.zeros(5)
    est = np.array([9.0, 9.0, 0.5, 9.0, 9.0])
    assert mse(clean, est, "middle") == 0.25
    assert mse(clean, est, [2, 3]) == pytest.approx((0.25 + 81) / 2)
    with pytest.raises(ValueError):
        mse(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        mse(clean, est, "edges")


def test_entropy_examples():
    assert entropy_of_quantized(np.full(50, 0.3), QuantSpec(6)) == 0.0
    assert entropy_of_quantized(np.array([0.1, 0.6] * 10), QuantSpec(1)) == pytest.approx(1.0, abs=1e-15)
    u = np.random.default_rng(0).random(1_000_000)
    assert entropy_of_quantized(u, QuantSpec(3)) == pytest.approx(3.0, abs=0.01)
    with pytest.raises(InsufficientData):
        entropy_of_quantized(np.array([]), QuantSpec(3))


@given(st.lists(st.floats(0.0, 0.999999), min_size=1, max_size=300), st.integers(1, 10))
def test_entropy_bounds(samples, b):
    h = entropy_of_quantized(np.array(samples), QuantSpec(b))
    assert -1e-12 <= h <= b + 1e-12
    assert h <= math.log2(len(samples)) + 1e-12


def test_pair_conditional_entropy():
    # a periodic sequence is fully determined by its predecessor
    x = np.array([0.1, 0.6, 0.3, 0.9] * 100)
    assert pair_conditional_entropy(x, QuantSpec(2)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InsufficientData):
        pair_conditional_entropy(np.array([0.1]), QuantSpec(2))


def test_slope_examples():
    atomic = SpikeSlabModel(0.0, ((0.25, 0.5), (0.75, 0.5)), UniformDensity())
    assert abs(id_slope_estimate(atomic, range(6, 13), n=1_000_000, seed=1)) <= 0.01
    uniform = SpikeSlabModel(1.0, (), UniformDensity())
    assert id_slope_estimate(uniform, range(6, 13), n=1_000_000, seed=2) == pytest.approx(1.0, abs=0.02)
    assert id_slope_estimate(uniform, range(6, 13), method="analytic") == pytest.approx(1.0, abs=1e-12)
    spike = SpikeSlabModel(0.3, ((0.5, 0.7),), UniformDensity())
    assert id_slope_estimate(spike, range(6, 13), n=1_000_000, seed=3) == pytest.approx(0.3, abs=0.05)


def test_analytic_slope_matches_closed_form():
    # uniform slab: one bin holds 0.7 + 0.3 / 2^b, the other 2^b - 1 hold 0.3 / 2^b each
    spike = SpikeSlabModel(0.3, ((0.5, 0.7),), UniformDensity())
    bs = np.arange(6, 13)
    hs = []
    for b in bs:
        p_atom, p_slab = 0.7 + 0.3 / 2**b, 0.3 / 2**b
        hs.append(-p_atom * math.log2(p_atom) - (2**b - 1) * p_slab * math.log2(p_slab))
    oracle = np.polyfit(bs, hs, 1)[0]
    assert id_slope_estimate(spike, bs, method="analytic") == pytest.approx(oracle, abs=1e-12)
    assert oracle == pytest.approx(0.3, abs=0.01)
    assert id_slope_estimate(example2_model(0.1), range(4, 9), method="analytic") == pytest.approx(0.1, abs=0.02)


def test_slope_stable_under_doubling_n():
    spike = SpikeSlabModel(0.3, ((0.5, 0.7),), UniformDensity())
    a = id_slope_estimate(spike, range(6, 13), n=1_000_000, seed=4)
    b = id_slope_estimate(spike, range(6, 13), n=2_000_000, seed=5)
    assert abs(a - b) <= 0.01


def test_slope_errors():
    spike = SpikeSlabModel(0.3, ((0.5, 0.7),), UniformDensity())
    with pytest.raises(InsufficientData):
        id_slope_estimate(spike, [6, 7, 8], n=10**6, seed=1)
    with pytest.raises(InsufficientData):
        id_slope_estimate(spike, range(6, 13), n=1000, seed=1)
    with pytest.raises(ValueError):
        id_slope_estimate(spike, range(6, 13))
    with pytest.raises(ValueError):
        id_slope_estimate(np.zeros(10), range(1, 5), method="analytic")


def test_psnr_examples():
    img = np.random.default_rng(0).random((8, 8))
    assert psnr(img, img) == math.inf
    assert psnr(np.zeros((4, 4)), np.ones((4, 4))) == 0.0
    assert psnr(np.zeros(100), np.full(100, 0.01)) == pytest.approx(40.0, abs=1e-9)
    assert psnr(np.zeros(4), np.full(4, 25.5), peak=255) == pytest.approx(20.0)
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(ValueError):
        psnr(img, img, peak=0)


def test_record_from_errors():
    r = SweepRecord.from_errors(np.zeros(10), 0.1, 0.03, 12, 1)
    assert r.mse == 0.0 and r.ratio == 0.0 and r.stderr == 0.0
    e = np.array([1e-4, 3e-4, 2e-4, 6e-4])
    r = SweepRecord.from_errors(e, 0.02, 0.02**1.5, 12, 1)
    assert r.ratio == r.mse / 0.02**2
    assert r.stderr == pytest.approx(e.std(ddof=1) / 2 / 0.02**2, rel=1e-12)
    with pytest.raises(ValueError):
        SweepRecord.from_errors([], 0.1, 0.0, 8, 1)
    with pytest.raises(ValueError):
        SweepRecord.from_errors([math.nan], 0.1, 0.0, 8, 1)


def _rec(sigma, b, ratio, se=0.01, est="qmap"):
    return SweepRecord(sigma, sigma**1.5, b, 1, 100, ratio * sigma**2, ratio, 0.0, se, 0.0, est)


def test_csv_schema_and_order():
    recs = [_rec(0.1, 12, 0.6), _rec(0.01, 12, 0.38), _rec(0.05, 8, 0.5), _rec(0.05, 6, 0.52)]
    text = records_to_csv(recs)
    lines = text.splitlines()
    assert lines[0] == "sigma,lambda,b,n,trials,mse,ratio,structure_error_rate,stderr,wall_time_s"
    assert tuple(lines[0].split(",")) == CSV_HEADER
    keys = [(float(l.split(",")[0]), int(l.split(",")[2])) for l in lines[1:]]
    assert keys == sorted(keys)
    back = records_from_csv(text)
    assert sorted(back, key=lambda r: (r.sigma, r.b)) == sorted(recs, key=lambda r: (r.sigma, r.b))
    with pytest.raises(ValueError):
        records_from_csv("a,b\n1,2\n")


def test_ratio_curve():
    pts = ratio_curve([_rec(0.01, 12, 0.38), _rec(0.1, 12, 0.62), _rec(0.05, 12, 0.52)])
    assert [p.sigma for p in pts] == [0.1, 0.05, 0.01]
    assert decreasing_within(pts)
    assert ratio_curve([SweepRecord.from_errors(np.zeros(5), 0.1, 0.0, 8, 1)])[0].ratio == 0.0
    with pytest.raises(ValueError):
        ratio_curve([_rec(0.1, 12, 0.6), _rec(0.05, 8, 0.5)])
    with pytest.raises(ValueError):
        ratio_curve([_rec(0.1, 12, 0.6), _rec(0.05, 12, 0.5, est="mmse")])


def test_decreasing_within_uses_joint_error():
    a = RatioPoint(0.1, 0.50, 0.01)
    assert decreasing_within([a, RatioPoint(0.05, 0.52, 0.01)])
    assert not decreasing_within([a, RatioPoint(0.05, 0.53, 0.01)])
