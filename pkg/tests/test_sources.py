import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from qmap.quantize import QuantSpec, empirical_block_dist, quantize
from qmap.sources import (
    BetaDensity,
    Branch,
    LinearDensity,
    MarkovModel,
    ModelError,
    SpikeSlabModel,
    UniformDensity,
    analytic_bin_prob_iid,
    analytic_bin_probs_iid,
    analytic_pair_matrix,
    analytic_pair_prob_markov,
    corrupt,
    dump_model,
    example1_model,
    example2_model,
    iid_weight_table,
    markov_weight_table,
    parse_model,
    sample_iid,
    sample_markov,
)


def test_model_validation():
    with pytest.raises(ModelError):
        SpikeSlabModel(0.3, ((0.5, 0.6),), UniformDensity())
    with pytest.raises(ModelError):
        SpikeSlabModel(0.3, ((0.5, 0.35), (0.5, 0.35)), UniformDensity())
    with pytest.raises(ModelError):
        MarkovModel(0.1, ((Branch("affine", a=2.0, c=0.0), 0.9),), UniformDensity(), 2.0)


def test_degenerate_atomic_sampling():
    x, labels = sample_iid(SpikeSlabModel(0.0, ((0.5, 1.0),), UniformDensity()), 1000, 1)
    assert np.all(x == 0.5) and np.all(labels == 1)


@pytest.mark.parametrize("dens", [UniformDensity(), LinearDensity(1.5), BetaDensity(2.0, 3.0)])
def test_continuous_sampling_matches_density(dens):
    x, labels = sample_iid(SpikeSlabModel(1.0, (), dens), 100_000, 2)
    assert np.all(labels == 0)
    assert stats.kstest(x, dens.cdf).statistic < 0.01


def test_label_fraction():
    _, labels = sample_iid(SpikeSlabModel(0.3, ((0.5, 0.7),), UniformDensity()), 100_000, 3)
    assert abs(np.mean(labels == 0) - 0.3) < 0.01


def test_sampling_deterministic():
    m = example1_model()
    a, la = sample_iid(m, 500, 77)
    b, lb = sample_iid(m, 500, 77)
    assert np.array_equal(a, b) and np.array_equal(la, lb)


def test_example2_jump_rate():
    x, labels = sample_markov(example2_model(0.1), 100_000, 5)
    jumps = np.count_nonzero(np.diff(x))
    assert abs(jumps / x.shape[0] - 0.1) < 0.02
    # labels reproduce the transitions exactly
    keep = labels == 1
    assert np.array_equal(x[1:][keep], x[:-1][keep])


def test_markov_q0_one_is_iid_uniform():
    m = MarkovModel(1.0, (), UniformDensity(), 1.0)
    x, labels = sample_markov(m, 50_000, 6)
    assert np.all(labels == 0)
    assert stats.kstest(x, "uniform").statistic < 0.01


@given(st.integers(0, 2**32 - 1))
def test_affine_branch_transitions_exact(seed):
    f = Branch("affine", a=0.5, c=0.25)
    g = Branch("tabulated", values=(0.1, 0.9, 0.3))
    m = MarkovModel(0.2, ((f, 0.5), (g, 0.3)), UniformDensity(), 1.6)
    x, labels = sample_markov(m, 300, seed)
    for p, br in ((1, f), (2, g)):
        sel = np.flatnonzero(labels == p)
        assert np.array_equal(x[sel + 1], br(x[sel]))


def test_corrupt_statistics():
    obs = corrupt(np.zeros(1_000_000), 0.05, 8)
    v = np.var(obs.noisy - obs.clean)
    assert 0.00245 <= v <= 0.00255
    assert abs(obs.noisy.mean()) <= 3 * 0.05 / 1000
    again = corrupt(np.zeros(1_000_000), 0.05, 8)
    assert np.array_equal(obs.noisy, again.noisy)
    with pytest.raises(ValueError):
        corrupt(np.zeros(3), 0.0, 1)


def test_analytic_iid_examples():
    assert analytic_bin_prob_iid(SpikeSlabModel(1.0, (), UniformDensity()), 5, QuantSpec(3)) == 1 / 8
    m = SpikeSlabModel(0.3, ((0.5, 0.7),), UniformDensity())
    assert analytic_bin_prob_iid(m, 8, QuantSpec(4)) == pytest.approx(0.71875, abs=1e-15)


@pytest.mark.parametrize("dens", [UniformDensity(), LinearDensity(-1.0), BetaDensity(2.0, 2.0)])
@pytest.mark.parametrize("b", [1, 4, 9])
def test_analytic_iid_total_mass(dens, b):
    m = SpikeSlabModel(0.4, ((0.25, 0.35), (0.9, 0.25)), dens)
    p = analytic_bin_probs_iid(m, QuantSpec(b))
    assert np.all(p >= 0)
    tol = 1e-12 if isinstance(dens, UniformDensity) else 1e-9
    assert abs(p.sum() - 1) <= tol


def test_iid_monte_carlo_agreement():
    m = SpikeSlabModel(0.4, ((0.25, 0.35), (0.9, 0.25)), LinearDensity(1.0))
    spec = QuantSpec(5)
    n = 1_000_000
    x, _ = sample_iid(m, n, 9)
    emp = empirical_block_dist(x, 1, spec)
    p = analytic_bin_probs_iid(m, spec)
    f = np.array([emp.get((a,), 0.0) for a in range(spec.nbins)])
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(f - p) <= 3 * se + 1e-12)


def test_pair_closed_form_example2():
    m = example2_model(0.1)
    b = 3
    k = 1 << b
    pm = analytic_pair_matrix(m, QuantSpec(b))
    off = 0.1 / k**2
    assert np.allclose(pm[~np.eye(k, dtype=bool)], off, rtol=0, atol=1e-15)
    assert np.allclose(np.diag(pm), off + 0.9 / k, rtol=0, atol=1e-15)
    assert analytic_pair_prob_markov(m, 2, 2, QuantSpec(b)) == pytest.approx(off + 0.9 / k, abs=1e-15)


def test_pair_independent_when_q0_one():
    m = MarkovModel(1.0, (), LinearDensity(0.5), 1.0)
    spec = QuantSpec(3)
    pm = analytic_pair_matrix(m, spec)
    mu = pm.sum(axis=1)
    assert np.allclose(pm, np.outer(mu, m.density.bin_masses(spec)), atol=1e-12)


def test_pair_row_sums_and_mass():
    f = Branch("affine", a=0.5, c=0.25)
    m = MarkovModel(0.3, ((f, 0.7),), UniformDensity(), 0.5)
    spec = QuantSpec(4)
    from qmap.sources import stationary_marginal

    pm = analytic_pair_matrix(m, spec)
    assert abs(pm.sum() - 1) < 1e-9
    assert np.allclose(pm.sum(axis=1), stationary_marginal(m, spec.b), atol=1e-9)


def test_markov_pair_monte_carlo_agreement():
    # overlapping pairs along one chain are correlated, so the standard
    # error comes from 100 independent-ish batches rather than the binomial formula
    m = example2_model(0.1)
    spec = QuantSpec(3)
    k = spec.nbins
    x, _ = sample_markov(m, 1_000_000, 10)
    bins = quantize(x, spec)
    batches = bins.reshape(100, -1)
    freq = np.zeros((100, k, k))
    for i, row in enumerate(batches):
        np.add.at(freq[i], (row[:-1], row[1:]), 1.0)
        freq[i] /= row.size - 1
    est = freq.mean(axis=0)
    se = freq.std(axis=0, ddof=1) / 10
    z = np.abs(est - analytic_pair_matrix(m, spec)) / se
    assert np.mean(z <= 3) >= 0.95 and z.max() < 4.5


def test_weight_tables_are_sparse_and_consistent():
    m = SpikeSlabModel(0.3, ((0.5, 0.7),), UniformDensity())
    t = iid_weight_table(m, QuantSpec(12))
    assert len(t) == 1 and t.keys[0, 0] == 2048
    assert t.default_weight == pytest.approx(-np.log2(0.3 / 4096))
    t2 = markov_weight_table(example2_model(0.1), QuantSpec(4))
    assert len(t2) == 16 and np.all(t2.keys[:, 0] == t2.keys[:, 1])


@pytest.mark.parametrize(
    "model",
    [
        example1_model(0.3),
        SpikeSlabModel(0.5, ((0.2, 0.25), (0.7, 0.25)), BetaDensity(2.0, 5.0)),
        example2_model(0.1),
        MarkovModel(0.2, ((Branch("affine", a=0.5, c=0.1), 0.5),
                          (Branch("tabulated", values=(0.0, 0.5, 0.2)), 0.3)), LinearDensity(0.5), 1.0),
    ],
)
def test_model_file_round_trip(model):
    again = parse_model(dump_model(model))
    assert dump_model(again) == dump_model(model)


def test_model_file_errors():
    with pytest.raises(ModelError):
        parse_model("[model]\nkind = spike-slab\n")
    with pytest.raises(ModelError):
        parse_model("[model]\nkind = nonsense\nq0 = 1\n")
    with pytest.raises(ModelError):
        parse_model("not an ini file")
