import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bihawkes import (
    EventSequence,
    HawkesModel,
    InstabilityError,
    branching_summary,
    intensities_at_events,
    intensity,
    intensity_trace,
)
from bihawkes.core import param_names, spectral_radius
from conftest import DEMO_PARAMS, random_sequence, random_stable_model
from oracles import naive_intensity


def test_poisson_degeneracy():
    m = HawkesModel([0.3, 0.7], np.zeros((2, 2)), np.ones((2, 2)))
    seq = EventSequence([1.0, 2.0, 5.0], [1, 2, 1], 10.0)
    for t in (0.0, 1.5, 9.9):
        assert intensity(m, seq, t, 1) == 0.3
        assert intensity(m, seq, t, 2) == 0.7


def test_empty_history(demo_model):
    seq = EventSequence([5.0], [1], 10.0)
    assert intensity(demo_model, seq, 4.0, 1) == pytest.approx(0.1)
    assert intensity(demo_model, seq, 5.0, 2) == pytest.approx(0.2)  # event at t itself excluded


def test_demo_single_event_hand_value(demo_model):
    seq = EventSequence([0.0], [2], 1.0)
    expected = 0.1 + 0.1 * 0.2 * math.exp(-0.2)
    assert intensity(demo_model, seq, 1.0, 1) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.11637, abs=5e-6)


@pytest.mark.parametrize("t,i", [(-0.1, 1), (10.5, 1), (1.0, 0), (1.0, 3), (float("nan"), 1)])
def test_intensity_rejects_bad_arguments(demo_model, t, i):
    seq = EventSequence([1.0], [1], 10.0)
    with pytest.raises(ValueError):
        intensity(demo_model, seq, t, i)


@pytest.mark.parametrize(
    "mu,alpha,beta",
    [
        ([0.0, 1.0], np.zeros((2, 2)), np.ones((2, 2))),
        ([1.0, 1.0], np.full((2, 2), 1.0), np.ones((2, 2))),
        ([1.0, 1.0], np.full((2, 2), -0.1), np.ones((2, 2))),
        ([1.0, 1.0], np.zeros((2, 2)), np.zeros((2, 2))),
        ([1.0, np.inf], np.zeros((2, 2)), np.ones((2, 2))),
    ],
)
def test_model_invariants(mu, alpha, beta):
    with pytest.raises(ValueError):
        HawkesModel(mu, alpha, beta)


@pytest.mark.parametrize(
    "times,marks,horizon",
    [([2.0, 1.0], [1, 1], 3.0), ([1.0, 1.0], [1, 2], 3.0), ([1.0], [3], 3.0), ([-1.0], [1], 3.0), ([4.0], [1], 3.0)],
)
def test_sequence_invariants(times, marks, horizon):
    with pytest.raises(ValueError):
        EventSequence(times, marks, horizon)


def test_types_are_immutable(demo_model):
    seq = EventSequence([1.0], [1], 2.0)
    with pytest.raises(ValueError):
        seq.times[0] = 0.5
    with pytest.raises(ValueError):
        demo_model.mu[0] = 1.0


def test_vector_roundtrip(demo_model):
    v = demo_model.to_vector()
    assert param_names(2) == ["mu1", "mu2", "a11", "a12", "a21", "a22", "b11", "b12", "b21", "b22"]
    assert list(v) == [0.1, 0.2, 0.5, 0.1, 0.2, 0.6, 0.3, 0.2, 0.8, 1.0]
    back = HawkesModel.from_vector(v)
    assert np.array_equal(back.alpha, demo_model.alpha)


def test_intensities_at_events_alpha_zero():
    m = HawkesModel([0.3, 0.7], np.zeros((2, 2)), np.ones((2, 2)))
    seq = EventSequence([1.0, 2.0], [2, 1], 3.0)
    assert intensities_at_events(m, seq).tolist() == [0.7, 0.3]


def test_intensities_match_naive_on_simulation():
    rng = np.random.default_rng(11)
    model = random_stable_model(rng)
    seq = random_sequence(model, rng, n_max=50, expected=50)
    fast = intensities_at_events(model, seq)
    slow = [
        naive_intensity(model.mu, model.alpha, model.beta, seq.times, seq.marks, t, m - 1)
        for t, m in zip(seq.times, seq.marks)
    ]
    np.testing.assert_allclose(fast, slow, rtol=1e-9, atol=0)


def test_zero_lag_limit():
    m = HawkesModel([0.2], [[0.4]], [[1.5]])
    eps = 1e-10
    seq = EventSequence([1.0, 1.0 + eps], [1, 1], 2.0, k=1)
    lam = intensities_at_events(m, seq)
    assert lam[1] == pytest.approx(0.2 + 0.4 * 1.5, rel=1e-8)


def test_univariate_reduction():
    m = HawkesModel([0.6], [[0.1]], [[0.5]])
    seq = EventSequence([0.5, 2.0, 2.5, 7.0], [1, 1, 1, 1], 10.0, k=1)
    t = 8.0
    expected = 0.6 + sum(0.1 * 0.5 * math.exp(-0.5 * (t - tj)) for tj in seq.times)
    assert intensity(m, seq, t, 1) == pytest.approx(expected, rel=1e-14)


def test_branching_summary_fig4(demo_model):
    s = branching_summary(demo_model)
    np.testing.assert_allclose(s.expected_rates, [1 / 3, 2 / 3], rtol=1e-12)
    np.testing.assert_allclose(s.expected_rates * 300, [100, 200], rtol=1e-12)
    assert s.spectral_radius == pytest.approx(0.7, rel=1e-12)
    assert np.all(s.timescales > 0)
    assert np.all(s.expected_rates >= demo_model.mu)


def test_branching_summary_timescale_of_reported_decay():
    m = HawkesModel([0.004, 0.003], [[0.139, 0.343], [0.018, 0.039]], [[1.226, 0.050], [0.621, 0.963]])
    s = branching_summary(m)
    assert s.timescales[0, 1] == pytest.approx(20.0)
    # the reported 20.161 days is 1/0.0496, the unrounded mean
    assert 1 / 0.0496 == pytest.approx(20.161, abs=1e-3)
    np.testing.assert_allclose(s.timescales, 1 / m.beta)


def test_branching_summary_alpha_zero():
    m = HawkesModel([0.3, 0.1], np.zeros((2, 2)), np.ones((2, 2)))
    s = branching_summary(m)
    assert s.spectral_radius == 0
    np.testing.assert_array_equal(s.expected_rates, m.mu)


def test_instability_error_names_radius():
    m = HawkesModel([0.1, 0.1], np.full((2, 2), 0.6), np.ones((2, 2)))
    with pytest.raises(InstabilityError, match="1.2"):
        branching_summary(m)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 0.99), min_size=4, max_size=4))
def test_spectral_radius_closed_form(vals):
    a = np.array(vals).reshape(2, 2)
    assert spectral_radius(a) == pytest.approx(max(abs(np.linalg.eigvals(a))), abs=1e-9)


def test_spectral_radius_general_k():
    a = np.array([[0.1, 0.2, 0.0], [0.3, 0.1, 0.1], [0.0, 0.2, 0.4]])
    assert spectral_radius(a) == pytest.approx(max(abs(np.linalg.eigvals(a))))


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(0.01, 30.0), min_size=1, max_size=15, unique=True),
    st.floats(0.0, 30.0),
    st.integers(1, 2),
    st.floats(0.05, 5.0),
)
def test_monotone_excitation(times, extra, mark, t_eval_offset):
    m = HawkesModel(**DEMO_PARAMS)
    times = sorted(times)
    rng_marks = [1 + (i % 2) for i in range(len(times))]
    base = EventSequence(times, rng_marks, 100.0)
    if extra in times:
        return
    ts = sorted(times + [extra])
    ms = [rng_marks[times.index(t)] if t in times else mark for t in ts]
    more = EventSequence(ts, ms, 100.0)
    t = extra + t_eval_offset
    for i in (1, 2):
        assert intensity(m, more, t, i) >= intensity(m, base, t, i) - 1e-15


def test_markov_decomposition(demo_model):
    seq = EventSequence([0.5, 1.0, 2.0], [1, 2, 2], 20.0)
    t, s = 3.0, 4.5
    for i in (1, 2):
        past = seq.times < t
        j = seq.types[past]
        parts = demo_model.alpha[i - 1, j] * demo_model.beta[i - 1, j] * np.exp(
            -demo_model.beta[i - 1, j] * (t - seq.times[past])
        )
        decayed = np.sum(parts * np.exp(-demo_model.beta[i - 1, j] * s))
        assert intensity(demo_model, seq, t + s, i) - demo_model.mu[i - 1] == pytest.approx(decayed, rel=1e-12)


def test_intensity_trace_matches_pointwise(demo_model):
    rng = np.random.default_rng(3)
    seq = random_sequence(demo_model, rng, expected=40)
    grid, lam = intensity_trace(demo_model, seq, step=0.1)
    assert grid[0] == 0 and grid[-1] <= seq.horizon
    np.testing.assert_allclose(np.diff(grid), 0.1, rtol=1e-9)
    for q in range(0, grid.size, max(1, grid.size // 37)):
        for i in (1, 2):
            assert lam[q, i - 1] == pytest.approx(intensity(demo_model, seq, grid[q], i), rel=1e-10)
