import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import weibull_mle_oracle
from macprint.openset import (
    DEGENERATE_SHAPE,
    ClassStatistics,
    OpenSetError,
    OpenSetModel,
    calibrate,
    confidence,
    decide,
    fit_class_stats,
    fit_openset,
    fit_weibull,
    tune_delta,
    weibull_cdf,
)

# (shape, scale) of the tail {1, 2, 3, 4, 5}, from a bisection oracle and
# cross-checked against scipy's weibull_min.fit with the location fixed at 0
TAIL_1_TO_5 = (2.293807, 3.394291)


def test_weibull_fit_matches_oracle_on_small_tail():
    k, lam = fit_weibull([1.0, 2.0, 3.0, 4.0, 5.0])
    assert k == pytest.approx(TAIL_1_TO_5[0], abs=1e-3)
    assert lam == pytest.approx(TAIL_1_TO_5[1], abs=1e-3)
    ok, olam = weibull_mle_oracle([1.0, 2.0, 3.0, 4.0, 5.0])
    assert (ok, olam) == pytest.approx(TAIL_1_TO_5, abs=1e-6)


def test_weibull_fit_agrees_with_scipy(rng):
    from scipy.stats import weibull_min

    for _ in range(5):
        x = rng.weibull(rng.uniform(0.7, 4), size=200) * rng.uniform(0.1, 20)
        k, lam = fit_weibull(x)
        sk, _, slam = weibull_min.fit(x, floc=0)
        assert k == pytest.approx(sk, rel=1e-3) and lam == pytest.approx(slam, rel=1e-3)


def test_weibull_recovers_known_parameters():
    x = np.random.default_rng(7).weibull(2.0, size=10_000)
    k, lam = fit_weibull(x)
    assert 1.9 <= k <= 2.1 and 0.98 <= lam <= 1.02


def test_weibull_degenerate_fallback():
    assert fit_weibull([2.5, 2.5, 2.5]) == (DEGENERATE_SHAPE, pytest.approx(2.5 + 1e-6))
    stats = fit_class_stats(np.ones((2, 4)))
    assert stats.shape == DEGENERATE_SHAPE and stats.scale == pytest.approx(1e-6)


def test_class_stats_requires_two_samples():
    with pytest.raises(OpenSetError):
        fit_class_stats(np.ones((1, 3)))


def test_class_stats_uses_the_largest_distances(rng):
    acts = rng.normal(size=(50, 3))
    stats = fit_class_stats(acts, eta=10)
    assert stats.tail_size == 10
    assert np.allclose(stats.mav, acts.mean(axis=0))
    d = np.sort(np.linalg.norm(acts - acts.mean(axis=0), axis=1))[-10:]
    assert (stats.shape, stats.scale) == pytest.approx(fit_weibull(d))
    assert fit_class_stats(acts[:5], eta=20).tail_size == 5


def test_weibull_cdf_bounds():
    x = np.linspace(0, 50, 500)
    c = weibull_cdf(x, 2.0, 3.0)
    assert c[0] == 0 and np.all(np.diff(c) >= 0) and c[-1] == pytest.approx(1.0)
    assert np.all(np.diff(weibull_cdf(np.linspace(0, 5, 50), 2.0, 3.0)) > 0)


def test_confidence_examples():
    stats = ClassStatistics(np.zeros(2), 2.0, 1.0, 5)
    assert confidence(stats, np.zeros(2)) == 1.0
    assert confidence(stats, np.array([1.0, 0.0])) == pytest.approx(np.exp(-1))
    assert confidence(stats, np.array([1e6, 0.0])) == pytest.approx(0.0)
    with pytest.raises(OpenSetError):
        confidence(stats, np.zeros(3))


@given(st.floats(0, 100), st.floats(0, 100))
def test_confidence_is_monotone_in_distance(a, b):
    stats = ClassStatistics(np.zeros(1), 1.5, 2.0, 5)
    lo, hi = sorted((a, b))
    assert confidence(stats, np.array([hi])) <= confidence(stats, np.array([lo]))


@pytest.mark.parametrize(
    "q, c, expected",
    [
        ([0.7, 0.3], [1, 1], [0.7, 0.3, 0.0]),
        ([0.7, 0.3], [0.5, 0.5], [0.35, 0.15, 0.5]),
        ([1.0, 0.0], [0, 1], [0.0, 0.0, 1.0]),
    ],
)
def test_calibrate_examples(q, c, expected):
    assert np.allclose(calibrate(np.array(q), np.array(c)), expected)


@pytest.mark.parametrize(
    "qhat, delta, expected",
    [([0.35, 0.15, 0.5], 0.4, 2), ([0.35, 0.15, 0.5], 0.6, 0), ([0.25, 0.25, 0.5], 0.6, 0)],
)
def test_decide_examples(qhat, delta, expected):
    assert decide(np.array(qhat), delta) == expected


def test_decide_rejects_bad_delta():
    with pytest.raises(OpenSetError):
        decide(np.array([0.5, 0.5, 0.0]), 1.0)


prob_rows = arrays(np.float64, st.integers(1, 8), elements=st.floats(0.001, 1.0))


@settings(max_examples=200)
@given(prob_rows, st.data())
def test_calibration_conserves_mass(raw, data):
    q = raw / raw.sum()
    c = data.draw(arrays(np.float64, q.shape, elements=st.floats(0.0, 1.0)))
    qhat = calibrate(q, c)
    assert abs(qhat.sum() - 1.0) <= 1e-9
    assert np.all(qhat >= 0) and np.all(qhat <= 1 + 1e-12)


@settings(max_examples=100)
@given(prob_rows, st.floats(0.01, 0.99))
def test_full_confidence_recovers_argmax(raw, delta):
    q = raw / raw.sum()
    assert decide(calibrate(q, np.ones_like(q)), delta) == np.argmax(q)


def _toy_openset(rng):
    acts = np.concatenate([rng.normal(0, 0.3, size=(100, 2)), rng.normal(5, 0.3, size=(100, 2))])
    labels = np.repeat([0, 1], 100)
    return fit_openset(acts, labels, labels, 2, eta=20), acts, labels


def test_openset_flags_far_activations(rng):
    model, acts, labels = _toy_openset(rng)
    probs = np.array([[0.9, 0.1], [0.9, 0.1], [0.1, 0.9], [0.9, 0.1]])
    av = np.array([[0.0, 0.0], [50.0, -50.0], [5.0, 5.0], [5.0, 5.0]])
    # the last row puts its mass on class 0 but sits on class 1's MAV
    assert list(model.predict(probs, av)) == [0, 2, 1, 2]


def test_fit_openset_requires_correct_samples(rng):
    acts = rng.normal(size=(10, 2))
    labels = np.array([0] * 9 + [1])
    with pytest.raises(OpenSetError):
        fit_openset(acts, labels, labels, 2)


def test_openset_array_round_trip(rng):
    model, _, _ = _toy_openset(rng)
    meta, arrs = model.to_arrays()
    back = OpenSetModel.from_arrays(meta, arrs)
    probe = rng.normal(2.5, 3, size=(20, 2))
    assert np.array_equal(back.confidences(probe), model.confidences(probe))
    assert back.delta == model.delta and back.eta == model.eta


def test_tune_delta_prefers_separating_threshold(rng):
    model, acts, labels = _toy_openset(rng)
    unk = rng.normal(20, 1, size=(50, 2))
    all_acts = np.concatenate([acts, unk])
    y = np.concatenate([labels, np.full(50, 2)])
    probs = np.zeros((len(all_acts), 2))
    probs[np.arange(len(all_acts)), np.where(y == 1, 1, 0)] = 1.0
    delta = tune_delta(model, probs, all_acts, y)
    pred = model.predict(probs, all_acts, delta)
    assert np.mean(pred == y) > 0.95
