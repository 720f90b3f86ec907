import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from macprint.catalog import UNKNOWN
from macprint.evaluation import confusion_matrix, evaluate, macro_f1, per_class


def test_perfect_predictions():
    r = evaluate(["a", "b", "a"], ["a", "b", "a"])
    assert r.accuracy == 1.0 and r.macro_f1 == 1.0


def test_all_wrong_binary():
    assert evaluate(["a", "b"], ["b", "a"]).accuracy == 0.0


def test_hand_computed_confusion():
    truth = ["c1"] * 5 + ["c2"] * 5
    pred = ["c1"] * 5 + ["c1", "c1", "c2", "c2", "c2"]
    r = evaluate(truth, pred, ["c1", "c2"])
    assert r.confusion.tolist() == [[5, 0], [2, 3]]
    assert r.accuracy == pytest.approx(0.8)
    assert r.recall["c2"] == pytest.approx(0.6)
    assert r.precision["c1"] == pytest.approx(5 / 7)
    f1_c1 = 2 * (5 / 7) * 1.0 / (5 / 7 + 1.0)
    f1_c2 = 2 * 1.0 * 0.6 / 1.6
    assert r.macro_f1 == pytest.approx((f1_c1 + f1_c2) / 2)


def test_agrees_with_sklearn(rng):
    from sklearn.metrics import accuracy_score, f1_score

    y = rng.integers(0, 4, size=300)
    p = np.where(rng.random(300) < 0.7, y, rng.integers(0, 4, size=300))
    r = evaluate([str(v) for v in y], [str(v) for v in p], ["0", "1", "2", "3"])
    assert r.accuracy == pytest.approx(accuracy_score(y, p))
    assert r.macro_f1 == pytest.approx(f1_score(y, p, average="macro"))


def test_unknown_metrics():
    r = evaluate(["a", "a", UNKNOWN, UNKNOWN], ["a", UNKNOWN, UNKNOWN, "a"], ["a", UNKNOWN])
    assert r.unknown_recall == 0.5 and r.known_accuracy == 0.5
    assert r.labels[-1] == UNKNOWN
    assert evaluate(["b", UNKNOWN], ["b", "b"]).labels == ["b", UNKNOWN]


def test_errors():
    with pytest.raises(ValueError):
        evaluate([], [])
    with pytest.raises(ValueError):
        evaluate(["a"], ["a", "b"])
    with pytest.raises(ValueError):
        evaluate(["a"], ["z"], ["a"])


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=80))
def test_confusion_conservation(pairs):
    t = np.array([a for a, _ in pairs])
    p = np.array([b for _, b in pairs])
    cm = confusion_matrix(t, p, 5)
    _, _, _, support = per_class(cm)
    assert cm.sum() == len(pairs)
    assert np.array_equal(cm.sum(axis=1), np.bincount(t, minlength=5)) and np.array_equal(support, cm.sum(axis=1))
    assert 0.0 <= macro_f1(t, p, 5) <= 1.0
    r = evaluate([str(v) for v in t], [str(v) for v in p], [str(i) for i in range(5)])
    assert r.accuracy == pytest.approx(np.trace(cm) / cm.sum())


def test_report_files_are_deterministic(tmp_path):
    r = evaluate(["a", "b", UNKNOWN], ["a", UNKNOWN, UNKNOWN], config={"seed": 1})
    paths = r.write(tmp_path / "one", "rep")
    r.write(tmp_path / "two", "rep", figure=False)
    assert {p.name for p in paths} == {"rep.txt", "rep.json", "rep_confusion.csv", "rep_confusion.png"}
    for name in ("rep.txt", "rep.json", "rep_confusion.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
    data = json.loads((tmp_path / "one" / "rep.json").read_text())
    assert data["config"] == {"seed": 1} and data["confusion"] == r.confusion.tolist()
    assert (tmp_path / "one" / "rep_confusion.csv").read_text().splitlines()[0] == "truth\\pred,a,b,unknown"
