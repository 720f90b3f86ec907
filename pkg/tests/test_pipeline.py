import numpy as np
import pytest

from conftest import trace_at
from macprint import pipeline
from macprint.catalog import UNKNOWN
from macprint.features import ConfigError, burstify, trace_burst_features
from macprint.model import TrainConfig, train
from macprint.synth import generate_session, parse_profiles

CATS = {"A": "video", "B": "music"}


def test_inherit_edges_counts():
    native = list(range(70))
    out = pipeline.inherit_edges(native, 100, 31)
    assert len(out) == 100
    assert out[:16] == [0] * 16 and out[-16:] == [69] * 16
    assert out[15:85] == native
    assert pipeline.inherit_edges([1, 2, 3, 4, 5, 6], 10, 5) == [1, 1, 1, 2, 3, 4, 5, 6, 6, 6]
    with pytest.raises(ValueError):
        pipeline.inherit_edges([1], 10, 5)


@pytest.mark.parametrize(
    "labels, order, expected",
    [
        (["A", "A", "B"], ["A", "B"], "A"),
        (["A", "B"], ["A", "B"], "A"),
        (["B", "A"], ["A", "B"], "A"),
        (["B", "A"], ["B", "A"], "B"),
        ([UNKNOWN, "B"], ["A", "B"], "B"),
        ([], ["A"], UNKNOWN),
    ],
)
def test_vote(labels, order, expected):
    assert pipeline.vote(labels, order) == expected


def test_majority_vote_per_burst():
    tr = trace_at([0.0, 0.2, 0.4, 2.1, 2.2])
    bursts = burstify(tr)
    assert pipeline.majority_vote(["A", "B", "B", "A", "B"], bursts, ["A", "B"]) == ["B", UNKNOWN, "A"]
    assert pipeline.majority_vote([], bursts) == [UNKNOWN] * 3
    with pytest.raises(ValueError):
        pipeline.majority_vote(["A"], bursts)


class Recorder:
    """Stand-in action model: records calls and predicts a fixed slot."""

    def __init__(self, classes, window, slot=0):
        self.classes, self.window, self.slot, self.calls = list(classes), window, slot, []

    def predict(self, x, use_openset=True, delta=None):
        self.calls.append(x)
        return np.full(len(x), self.slot)


def test_predict_actions_routing_and_edges():
    feats = np.arange(10 * 22, dtype=float).reshape(10, 22)
    video = Recorder(["forward", "play", "backward", "next"], 5, slot=1)
    music = Recorder(["forward", "play", "backward", "next"], 5, slot=3)
    apps = ["A"] * 4 + [UNKNOWN] + ["B"] * 5
    out = pipeline.predict_actions(feats, apps, {"video": video, "music": music}, CATS)
    assert out == ["play"] * 4 + [UNKNOWN] + ["next"] * 5
    windows = video.calls[0]
    # first bursts use the window of the first valid center (burst index 2)
    assert np.array_equal(windows[0], feats[0:5]) and np.array_equal(windows[3], feats[1:6])
    assert sum(len(c) for c in music.calls) == 5


def test_predict_actions_unknown_app_skips_classifier():
    model = Recorder(["forward", "play", "backward", "next"], 1)
    out = pipeline.predict_actions(np.zeros((3, 22)), [UNKNOWN] * 3, {"video": model}, CATS)
    assert out == [UNKNOWN] * 3 and model.calls == []


def test_predict_actions_configuration_errors():
    with pytest.raises(ConfigError):
        pipeline.predict_actions(np.zeros((3, 22)), ["A"] * 3, {}, CATS)
    with pytest.raises(ConfigError):
        pipeline.predict_actions(np.zeros((3, 22)), ["Z"] * 3, {}, CATS)
    with pytest.raises(ValueError):
        pipeline.predict_actions(np.zeros((3, 22)), ["A"] * 2, {}, CATS)


def test_predict_actions_short_trace_stays_unknown():
    model = Recorder(["forward", "play", "backward", "next"], 5)
    assert pipeline.predict_actions(np.zeros((3, 22)), ["A"] * 3, {"video": model}, CATS) == [UNKNOWN] * 3


def test_assemble_behavior_one_hot():
    recs = pipeline.assemble_behavior(["A", UNKNOWN], ["play", UNKNOWN], ["A", "B"], CATS)
    assert len(recs) == 2
    b0 = recs[0].b
    assert b0.shape == (2 + 1 + 4 + 1,)
    assert list(recs[0].y) == [1, 0, 0] and list(recs[0].x) == [0, 1, 0, 0, 0]
    assert list(recs[1].y) == [0, 0, 1] and list(recs[1].x) == [0, 0, 0, 0, 1]
    for r in recs:
        assert r.y.sum() == 1 and r.x.sum() == 1
    m = pipeline.behavior_matrix(recs)
    assert m.shape == (2, 8)
    with pytest.raises(ValueError):
        pipeline.assemble_behavior(["A"] * 3, ["play"] * 4, ["A"], CATS)


def two_app_doc():
    def app(name, category, mu):
        model = {"up_rate": 20, "down_rate": 20, "up_size": [mu, 0.1], "down_size": [mu, 0.1]}
        from macprint.catalog import actions_for

        return {"id": name, "category": category, "actions": {a: dict(model) for a in actions_for(category)}}

    return {"format": "macprint-profiles v1", "switch_app_prob": 0.9,
            "apps": [app("small", "video", 4.5), app("large", "music", 7.0)]}


@pytest.fixture(scope="module")
def two_app_model():
    profiles, _ = parse_profiles(two_app_doc())
    items = []
    for seed in range(3):
        s = generate_session(profiles, 60, seed=seed)
        from macprint.segment import TrafficTrace

        items.append((TrafficTrace(s.station, 0, tuple(s.frames)), s.truth.frame_apps))
    x, y = pipeline.app_dataset(items[:2], ["small", "large"], 11, stride=4)
    model = train(x, y, ["small", "large"], TrainConfig(epochs=3, seed=0), net_config={"channels": 8})
    return model, items[2]


def test_disjoint_size_profiles_are_separated(two_app_model):
    model, (trace, truth) = two_app_model
    pred = pipeline.predict_app_sequence(trace, model, use_openset=False)
    assert len(pred) == len(trace)
    assert np.mean(np.array(pred) == np.array(truth)) >= 0.99


def test_predict_app_sequence_short_trace(two_app_model):
    model, _ = two_app_model
    assert pipeline.predict_app_sequence(trace_at([0.0, 0.1, 0.2]), model) == []


def test_closed_world_recovery_against_argmax(two_app_model):
    model, (trace, _) = two_app_model
    from macprint.features import app_samples

    samples = app_samples(trace, model.window)
    probs, acts = model.forward(samples.windows)
    from macprint.openset import ClassStatistics, OpenSetModel

    model.openset = OpenSetModel([ClassStatistics(np.zeros(acts.shape[1]), 1.0, 1e300, 1)] * 2)
    for delta in (0.1, 0.5, 0.9):
        assert np.array_equal(model.predict(samples.windows, True, delta), probs.argmax(axis=1))
    model.openset = None


def test_app_and_action_datasets():
    tr = trace_at(np.arange(20) * 0.1)
    labels = ["A"] * 10 + [UNKNOWN] * 10
    x, y = pipeline.app_dataset([(tr, labels)], ["A", "B"], 5)
    assert len(x) == 8 and set(y) == {0}
    feats = trace_burst_features(trace_at(np.arange(60) * 0.1))
    xa, ya = pipeline.action_dataset([(feats, ["play", UNKNOWN, "next", "play", "play", "next"])], ["play", "next"], 3)
    assert xa.shape == (5, 3, 22) and list(ya) == [0, 1, 0, 0, 1]
    assert np.array_equal(xa[0], feats[0:3]) and np.array_equal(xa[-1], feats[3:6])
