import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn import metrics as skm

from winleak.core import ConfigError
from winleak.metrics import (
    ConfusionMatrix,
    accuracy,
    balanced_accuracy,
    confusion,
    per_class_f1,
    weighted_f1,
)


def cm_of(rows):
    rows = np.array(rows)
    return ConfusionMatrix(tuple(f"c{i}" for i in range(len(rows))), rows)


def test_confusion_basics():
    cm = confusion([0, 1, 2], [0, 1, 2], ["a", "b", "c"])
    assert (cm.counts == np.eye(3)).all()
    cm = confusion([0], [1], ["a", "b"])
    assert cm.counts.tolist() == [[0, 1], [0, 0]]
    cm = confusion([0, 0, 1], [1, 0, 1], ["a", "b"])
    assert cm.support.tolist() == [2, 1]
    with pytest.raises(ConfigError):
        confusion([0, 1], [0], ["a", "b"])


def test_balanced_accuracy_examples():
    assert balanced_accuracy(cm_of(np.eye(3) * 4)) == 1.0
    assert balanced_accuracy(cm_of([[5, 0], [5, 0]])) == 0.5
    assert balanced_accuracy(cm_of([[8, 2, 0], [1, 9, 0], [5, 0, 5]])) == pytest.approx(0.7333, abs=5e-5)


def test_balanced_accuracy_ignores_absent_classes():
    assert balanced_accuracy(cm_of([[3, 1, 0], [0, 0, 0], [0, 0, 2]])) == pytest.approx((0.75 + 1) / 2)


def test_weighted_f1_examples():
    assert weighted_f1(cm_of(np.eye(2) * 3)) == 1.0
    f1 = per_class_f1(cm_of([[5, 5], [0, 10]]))
    assert f1 == pytest.approx([2 / 3, 0.8])
    assert weighted_f1(cm_of([[5, 5], [0, 10]])) == pytest.approx(0.7333, abs=5e-5)
    assert per_class_f1(cm_of([[0, 4], [0, 4]]))[0] == 0


def test_all_zero_matrix_is_an_error():
    for fn in (accuracy, balanced_accuracy, weighted_f1):
        with pytest.raises(ConfigError):
            fn(cm_of(np.zeros((2, 2), dtype=int)))


def test_csv_and_json_export():
    cm = confusion([0, 1, 1], [0, 0, 1], ["sleep", "cook"])
    assert cm.to_csv() == "truth\\predicted,sleep,cook\nsleep,1,0\ncook,1,1\n"
    back = ConfusionMatrix.from_dict(__import__("json").loads(cm.to_json()))
    assert back.classes == cm.classes and (back.counts == cm.counts).all()


labels = st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=200)


@settings(max_examples=200, deadline=None)
@given(labels)
def test_matches_sklearn(pairs):
    t, p = map(np.array, zip(*pairs))
    cm = confusion(t, p, [str(i) for i in range(5)])
    assert accuracy(cm) == pytest.approx(skm.accuracy_score(t, p))
    assert balanced_accuracy(cm) == pytest.approx(float(np.mean(
        [np.mean(p[t == c] == c) for c in np.unique(t)]
    )))
    assert weighted_f1(cm) == pytest.approx(
        skm.f1_score(t, p, labels=list(range(5)), average="weighted", zero_division=0)
    )
    assert per_class_f1(cm) == pytest.approx(skm.f1_score(t, p, labels=list(range(5)), average=None, zero_division=0))


@settings(max_examples=100, deadline=None)
@given(labels, st.permutations(range(5)))
def test_permutation_invariance(pairs, perm):
    t, p = map(np.array, zip(*pairs))
    cm = confusion(t, p, [str(i) for i in range(5)])
    pm = cm.permuted(perm)
    assert balanced_accuracy(pm) == pytest.approx(balanced_accuracy(cm))
    assert weighted_f1(pm) == pytest.approx(weighted_f1(cm))
    inv = np.argsort(perm)
    assert (pm.counts == confusion(inv[t], inv[p], pm.classes).counts).all()


def test_uniform_random_predictor_is_at_chance():
    rng = np.random.default_rng(0)
    for c in (2, 5, 10):
        t = np.repeat(np.arange(c), 10_000 // c)
        p = rng.integers(0, c, size=len(t))
        assert abs(balanced_accuracy(confusion(t, p, [str(i) for i in range(c)])) - 1 / c) <= 0.03
