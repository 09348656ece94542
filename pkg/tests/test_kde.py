import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from commitmotion import kde, synth
from commitmotion.grid import GridSpec
from commitmotion.kde import (
    CommitmentModel,
    KdeError,
    KdeModel,
    combine,
    commitment_probability,
    density,
    fit_commitment_model,
    fit_kde,
    slice_grid,
)


def naive_density(samples, h, q):
    total = 0.0
    for s in samples:
        k = 1.0
        for j in range(len(q)):
            z = (q[j] - s[j]) / h[j]
            k *= math.exp(-0.5 * z * z) / (h[j] * math.sqrt(2 * math.pi))
        total += k
    return total / len(samples)


def test_manual_fit_stores_samples():
    m = fit_kde([0.0, 2.0], "manual", [1.0])
    assert m.samples.ravel().tolist() == [0.0, 2.0]
    assert m.bandwidths.tolist() == [1.0]


def test_scott_bandwidth_value():
    m = fit_kde([0.0, 1.0, 2.0, 3.0])
    sigma = math.sqrt(5.0 / 3.0)
    assert sigma == pytest.approx(1.2910, abs=1e-4)
    assert m.bandwidths[0] == pytest.approx(sigma * 4 ** -0.2, rel=1e-12)
    assert m.bandwidths[0] == pytest.approx(0.97839, abs=1e-5)


@pytest.mark.parametrize("bad", [
    dict(samples=[[1.0, 2.0]] * 5),
    dict(samples=[1.0], rule="scott"),
    dict(samples=[1.0, 2.0], rule="manual", bw=[0.0]),
    dict(samples=[1.0, 2.0], rule="manual", bw=[-1.0]),
])
def test_fit_errors(bad):
    with pytest.raises(KdeError):
        fit_kde(bad["samples"], bad.get("rule", "scott"), bad.get("bw"))


def test_degenerate_dimension_message():
    with pytest.raises(KdeError, match="degenerate dimension"):
        fit_kde([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])


def test_gaussian_peak_and_symmetry():
    m = KdeModel(np.array([[0.0]]), np.array([1.0]))
    assert density(m, [0.0]) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert density(m, [1.0]) == density(m, [-1.0])


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(1)
    s = rng.normal(size=(100, 4)) * [5, 5, 2, 1]
    h = rng.uniform(0.3, 3.0, 4)
    m = KdeModel(s, h)
    q = rng.normal(size=(20, 4)) * [5, 5, 2, 1]
    got = m.evaluate(q)
    want = np.array([naive_density(s, h, row) for row in q])
    np.testing.assert_allclose(got, want, rtol=1e-9, atol=0)


def test_evaluate_fixed_matches_full():
    rng = np.random.default_rng(2)
    s = rng.normal(size=(300, 4))
    m = KdeModel(s, rng.uniform(0.5, 1.5, 4))
    xy = rng.normal(size=(50, 2))
    full = m.evaluate(np.column_stack([xy, np.full(50, 0.3), np.full(50, -0.2)]))
    np.testing.assert_allclose(m.evaluate_fixed(xy, {2: 0.3, 3: -0.2}), full, rtol=1e-12)


def test_one_dimensional_integral():
    rng = np.random.default_rng(3)
    m = fit_kde(rng.normal(size=40))
    h = m.bandwidths[0]
    xs = np.linspace(m.samples.min() - 10 * h, m.samples.max() + 10 * h, 20001)
    f = m.evaluate(xs.reshape(-1, 1))
    assert np.all(f >= 0)
    assert np.trapezoid(f, xs) == pytest.approx(1.0, abs=1e-6)


def test_combine_examples():
    assert combine(0.3, 0.3, 0.5) == 0.5
    assert combine(0.2, 0.0, 0.3) == 1.0
    assert combine(0.0, 0.0, 0.3) == 0.0
    assert combine(1e-13, 0.0, 0.5) == 0.0


def test_two_kernel_closed_form():
    s1 = np.array([0.0, 0.0, 2.0, 1.0])
    s0 = np.array([1.0, -1.0, 3.0, 2.0])
    h = np.ones(4)
    model = CommitmentModel(KdeModel(s1[None], h), KdeModel(s0[None], h))
    assert model.w == 0.5
    kappa0 = (2 * math.pi) ** -2
    kappa_d = kappa0 * math.exp(-0.5 * float(np.sum((s1 - s0) ** 2)))
    assert commitment_probability(model, s1) == pytest.approx(kappa0 / (kappa0 + kappa_d), rel=1e-12)


finite = st.floats(min_value=0.0, max_value=1e3, allow_nan=False)
# dyadic weights keep 1 - w exact, so the swapped call sees the same split
weight = st.integers(1, 2**40 - 1).map(lambda k: k / 2**40)


@settings(max_examples=300, deadline=None)
@given(finite, finite, weight)
def test_probability_range_and_exchange(f1, f0, w):
    p = combine(f1, f0, w)
    assert 0.0 <= p <= 1.0
    q = combine(f0, f1, 1 - w)
    if w * f1 + (1 - w) * f0 >= kde.EPSILON_FLOOR:
        assert p + q == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-6, 10), st.floats(1e-6, 10), weight, weight)
def test_monotone_in_w(f1, f0, w1, w2):
    lo, hi = sorted((w1, w2))
    if hi - lo < 1e-9:
        return
    assert combine(f1, f0, lo) < combine(f1, f0, hi)


def sample_rows(n1, n0):
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(n1 + n0, 4))
    c = np.r_[np.ones(n1), np.zeros(n0)]
    return np.column_stack([rows, c])


def test_weight_from_counts():
    assert fit_commitment_model(sample_rows(10, 10)).w == 0.5
    m = fit_commitment_model(sample_rows(30, 70))
    assert abs(m.w - 0.3) <= 1e-12


def test_one_sided_data():
    with pytest.raises(KdeError, match="cannot weight one-sided data"):
        fit_commitment_model(sample_rows(5, 0))


def test_json_round_trip(tmp_path):
    m = fit_commitment_model(sample_rows(20, 40), bandwidth_scale=0.7)
    path = tmp_path / "m.json"
    m.save(path)
    doc = json.loads(path.read_text())
    assert set(doc) >= {"dim", "bandwidths", "w", "samples_c1", "samples_c0", "epsilon_floor", "metadata"}
    assert doc["metadata"]["source_counts"] == {"c1": 20, "c0": 40}
    back = CommitmentModel.load(path)
    q = np.random.default_rng(5).normal(size=(30, 4))
    assert np.array_equal(back.probability(q), m.probability(q))
    doc["w"] = 0.5
    with pytest.raises(KdeError):
        CommitmentModel.from_dict(doc)


def test_slice_range_and_empty_window(synth_model):
    g = slice_grid(synth_model, 2.0, 2.0, GridSpec.from_window(-20, 20, -20, 20, 2.0))
    assert np.all((g.values >= 0) & (g.values <= 1))
    with pytest.raises(ValueError):
        GridSpec.from_window(0, 0, -1, 1, 1.0)


def test_slice_symmetric_for_mirrored_data(synth_model):
    s1 = synth_model.f1.samples
    s0 = synth_model.f0.samples
    flip = np.array([1, -1, 1, 1])
    rows = np.vstack([
        np.column_stack([np.vstack([s1, s1 * flip]), np.ones(2 * len(s1))]),
        np.column_stack([np.vstack([s0, s0 * flip]), np.zeros(2 * len(s0))]),
    ])
    m = fit_commitment_model(rows)
    g = slice_grid(m, 2.0, 2.0, GridSpec.from_window(-30, 30, -30, 30, 1.0))
    np.testing.assert_allclose(g.values, g.values[:, ::-1], atol=1e-9, rtol=0)


def test_slice_mode_lies_on_truth_plateau(synth_model):
    rule = synth.TrueRule()
    window = GridSpec.from_window(-30, 30, -30, 30, 1.0)
    X, Y = window.mesh()
    g = slice_grid(synth_model, 2.0, 2.0, window)
    i = np.unravel_index(np.argmax(g.values), g.values.shape)
    truth = rule(X, Y, 2.0, 2.0)
    # the true rule is flat ahead of the player, so the mode is any cell near its maximum
    near = np.hypot(X - X[i], Y - Y[i]) <= window.cell_size * math.sqrt(2) + 1e-9
    assert truth[near].max() >= truth.max() - 0.05
    assert math.hypot(X[i], Y[i]) <= rule.v_max * 2.0
