import math
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from winleak.core import ConfigError, SensorEvent, SensorKind, Window
from winleak.features import (
    EventFeatureSchema,
    compute_mi_matrix,
    correlation_graph,
    cyclic_encode,
    event_window_features,
    pearson_matrix,
    sample_features,
    sample_window_stats,
    sparsity,
    window_entropy,
)

from conftest import motion

T0 = datetime(2009, 10, 19, 6, 0)  # a Monday


def seq(ids, t0=T0):
    return [motion(t0 + timedelta(seconds=i), s) for i, s in enumerate(ids)]


def test_mi_alternating_pair():
    mi = compute_mi_matrix(seq("ABAB"))
    assert mi["A", "B"] == pytest.approx(2 / 3)
    assert mi["B", "A"] == pytest.approx(1 / 3)
    assert mi["A", "A"] == 0


def test_mi_single_sensor_and_empty():
    assert compute_mi_matrix(seq("AAA"))["A", "A"] == 1.0
    with pytest.warns(UserWarning):
        mi = compute_mi_matrix([], sensors=["A", "B"])
    assert not mi.matrix.any()


def test_mi_pairs_do_not_cross_runs():
    mi = compute_mi_matrix([seq("AB"), seq("CD")])
    assert mi.n_pairs == 2
    assert mi["B", "C"] == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from("ABCDE"), min_size=2, max_size=60))
def test_mi_matches_pair_enumeration(ids):
    mi = compute_mi_matrix(seq(ids))
    n = len(ids) - 1
    assert mi.n_pairs == n
    for a in set(ids):
        for b in set(ids):
            pairs = sum(1 for x, y in zip(ids, ids[1:]) if (x, y) == (a, b))
            assert mi[a, b] == pytest.approx(pairs / n, abs=1e-15)
    assert ((mi.matrix >= 0) & (mi.matrix <= 1)).all()
    assert mi.matrix.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("hour,expected", [(0, (0, 1)), (6, (1, 0)), (12, (0, -1))])
def test_cyclic_encode_examples(hour, expected):
    s, c = cyclic_encode(hour, 24)
    assert s == pytest.approx(expected[0], abs=1e-12) and c == pytest.approx(expected[1], abs=1e-12)


@given(st.floats(-1e6, 1e6, allow_nan=False), st.floats(1e-3, 1e4))
def test_cyclic_encode_unit_circle(v, period):
    s, c = cyclic_encode(v, period)
    assert abs(s * s + c * c - 1) <= 1e-12


def test_cyclic_encode_rejects_bad_period():
    with pytest.raises(ConfigError):
        cyclic_encode(1, 0)


def test_entropy_oracles():
    assert window_entropy(["M1"] * 30) == 0
    assert window_entropy(["a", "b", "c", "d"]) == pytest.approx(2.0)
    hand = -(0.75 * math.log2(0.75) + 0.25 * math.log2(0.25))
    assert window_entropy(["a", "a", "a", "b"]) == pytest.approx(hand, abs=1e-12)
    assert round(hand, 4) == 0.8113


@given(st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=40))
def test_entropy_bounds(ids):
    h = window_entropy(ids)
    assert 0 <= h <= math.log2(len(set(ids))) + 1e-12


def test_sparsity_oracles():
    assert sparsity([1, 2, 3]) == 0
    assert sparsity([0, 4, 0, 1]) == 0.5
    assert sparsity([0, 0]) == 1
    with pytest.raises(ConfigError):
        sparsity([])


def _layout(sensors=("M001", "M002", "M003")):
    kinds = {s: SensorKind.MOTION for s in sensors}
    kinds["D001"] = SensorKind.DOOR
    kinds["T001"] = SensorKind.TEMPERATURE
    loc = {"M001": "kitchen", "M002": "kitchen", "M003": "bed", "D001": "hall", "T001": "bed"}
    return EventFeatureSchema(kinds, loc)


def test_single_sensor_window():
    layout = _layout()
    window = seq(["M002"] * 30, t0=T0 - timedelta(seconds=29))  # last event at 06:00 Monday
    mi = compute_mi_matrix(window, sensors=sorted(layout.sensor_kinds))
    assert mi["M002", "M002"] == 1.0
    x = dict(zip(layout.schema.names, event_window_features(window, mi, layout)))
    assert x["act[M002]"] == 30
    assert x["act[M001]"] == x["act[M003]"] == x["act[D001]"] == 0
    assert x["sparsity"] == pytest.approx(1 - 1 / 4)
    assert x["avg_temp"] == 0 and x["temp_present"] == 0
    assert (x["hour_sin"], x["hour_cos"]) == pytest.approx((1, 0), abs=1e-12)
    assert (x["dow_sin"], x["dow_cos"]) == pytest.approx((0, 1), abs=1e-12)
    assert x["last_status"] == 1
    assert x["last_location[kitchen]"] == 1 and x["last_motion_location[kitchen]"] == 1


def test_window_features_mixed_sensors():
    layout = _layout()
    window = [
        motion(T0, "M001", True),
        motion(T0 + timedelta(seconds=1), "M001", False),
        SensorEvent(T0 + timedelta(seconds=2), "T001", SensorKind.TEMPERATURE, 20.0),
        SensorEvent(T0 + timedelta(seconds=3), "T001", SensorKind.TEMPERATURE, 22.0),
        SensorEvent(T0 + timedelta(seconds=4), "D001", SensorKind.DOOR, False),
    ]
    mi = compute_mi_matrix(seq(["M001", "D001", "M003", "D001"]), sensors=sorted(layout.sensor_kinds))
    x = dict(zip(layout.schema.names, event_window_features(window, mi, layout)))
    # one ON event for M001, weighted by MI[M001, D001] = 1/3
    assert x["act[M001]"] == pytest.approx(1 / 3)
    # the door appears once; MI[D001, D001] = 0
    assert x["act[D001]"] == 0
    # sparsity uses unweighted counts: M001 and D001 fired
    assert x["sparsity"] == pytest.approx(0.5)
    assert x["avg_temp"] == 21.0 and x["temp_present"] == 1
    assert x["last_status"] == 0
    assert x["last_location[hall]"] == 1
    assert x["last_motion_location[kitchen]"] == 1
    assert x["entropy"] == pytest.approx(window_entropy(["M001", "M001", "T001", "T001", "D001"]))


def test_layout_requires_location_for_every_sensor():
    with pytest.raises(ConfigError):
        EventFeatureSchema({"M001": SensorKind.MOTION, "M009": SensorKind.MOTION}, {"M001": "kitchen"})


def test_sample_stats_examples():
    assert list(sample_window_stats(np.full((10, 1), 5.0))) == [5, 0, 5, 5]
    assert list(sample_window_stats(np.array([[0.0], [2.0]]))) == [1, 1, 0, 2]
    assert sample_window_stats(np.zeros((3, 2))).shape == (8,)


def test_sample_features_follow_windows(rng):
    data = rng.normal(size=(50, 3))
    ws = [Window("s", 0, 10, 0, "s"), Window("s", 20, 50, 0, "s")]
    X = sample_features(data, ws)
    assert np.allclose(X[1], sample_window_stats(data[20:50]))


def test_correlation_graph_examples(rng):
    a = rng.normal(size=100)
    g = correlation_graph(np.stack([a, a, -a, np.full(100, 3.0)], axis=1))
    assert g.edges == ((0, 1),)
    assert g.weights[0] == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 40), st.integers(2, 6))
def test_correlation_graph_matches_pearson_oracle(seed, n, c):
    r = np.random.default_rng(seed)
    x = r.normal(size=(n, c))
    x[:, 0] += x[:, 1] * r.uniform(-1, 1)
    if seed % 5 == 0:
        x[:, -1] = 1.0
    g = correlation_graph(x, 0.2)
    expected = set()
    for i in range(c):
        for j in range(i + 1, c):
            xi, xj = x[:, i], x[:, j]
            if xi.std() == 0 or xj.std() == 0:
                continue
            rr = float(np.corrcoef(xi, xj)[0, 1])
            # skip pairs within rounding distance of the threshold
            if abs(rr - 0.2) < 1e-9:
                continue
            if rr > 0.2:
                expected.add((i, j))
    got = {e for e in g.edges if abs(pearson_matrix(x)[e] - 0.2) >= 1e-9}
    assert got == expected
    adj = g.adjacency()
    assert (adj == adj.T).all() and not adj.diagonal().any()


def test_correlation_threshold_one_is_edgeless(rng):
    assert correlation_graph(rng.normal(size=(200, 5)), 1.0).edges == ()
