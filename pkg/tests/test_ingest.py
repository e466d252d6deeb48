import json
import warnings
from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings, strategies as st

from winleak.core import Annotation, ConfigError, DataFormatError, SensorKind
from winleak.ingest import (
    MHEALTH,
    OTHER,
    PAMAP2,
    LabelWarning,
    SampleTableSchema,
    load_manifest,
    parse_event_log,
    parse_sample_table,
    resolve_labels,
    serialize_event_log,
    serialize_sample_table,
)
from winleak.synth import AmbientSynthConfig, generate_ambient_stream

from conftest import motion


def test_parse_annotated_motion_line():
    log = parse_event_log("2009-10-16 06:47:33 M012 ON Sleep begin\n")
    (e,) = log.events
    assert e.sensor_id == "M012" and e.kind is SensorKind.MOTION and e.value is True
    assert e.annotation == Annotation("Sleep", "begin")
    assert e.timestamp == datetime(2009, 10, 16, 6, 47, 33)


def test_parse_temperature_line():
    (e,) = parse_event_log("2009-10-16 06:47:40 T001 21.5").events
    assert e.kind is SensorKind.TEMPERATURE and e.value == 21.5 and e.annotation is None


def test_parse_fractional_seconds_and_doors():
    (e,) = parse_event_log("2009-10-16 06:47:40.123456 D003 CLOSE").events
    assert e.kind is SensorKind.DOOR and e.value is False
    assert e.timestamp.microsecond == 123456


def test_parse_empty():
    log = parse_event_log("")
    assert log.events == [] and log.malformed == []


def test_malformed_lines_are_counted():
    good = "\n".join(f"2009-10-16 06:47:{i:02d} M001 ON" for i in range(20))
    log = parse_event_log(good + "\ngarbage line\n")
    assert len(log.events) == 20
    assert [n for n, _ in log.malformed] == [21]


def test_too_many_malformed_lines_is_a_format_error():
    text = "2009-10-16 06:47:00 M001 ON\nfoo bar\nbaz qux\n"
    with pytest.raises(DataFormatError):
        parse_event_log(text)


def test_decreasing_timestamps_rejected():
    with pytest.raises(DataFormatError):
        parse_event_log("2009-10-16 06:47:02 M001 ON\n2009-10-16 06:47:01 M001 OFF\n")


def _stream(spec):
    """Events from (annotation or None) specs, one second apart."""
    t0 = datetime(2009, 10, 16, 8)
    out = []
    for i, ann in enumerate(spec):
        out.append(motion(t0 + timedelta(seconds=i), "M001", annotation=None if ann is None else Annotation(*ann)))
    return out


def labels(spec):
    return [e.label for e in resolve_labels(_stream(spec))]


def test_resolve_simple_span():
    assert labels([("A", "begin"), None, None, ("A", "end")]) == ["A"] * 4


def test_resolve_other_outside_spans():
    assert labels([None, ("A", "begin"), None, ("A", "end"), None]) == [OTHER, "A", "A", "A", OTHER]


def test_resolve_innermost_wins():
    got = labels([("A", "begin"), ("B", "begin"), None, ("B", "end"), ("A", "end")])
    assert got == ["A", "B", "B", "B", "A"]


def test_resolve_unmatched_markers_warn():
    with pytest.warns(LabelWarning):
        assert labels([None, ("A", "end"), None]) == [OTHER] * 3
    with pytest.warns(LabelWarning):
        assert labels([("A", "begin"), None]) == ["A", "A"]


annotation_specs = st.lists(
    st.one_of(st.none(), st.tuples(st.sampled_from(["A", "B", "C"]), st.sampled_from(["begin", "end"]))),
    max_size=30,
)


@settings(max_examples=200, deadline=None)
@given(annotation_specs)
def test_resolve_labels_label_set(spec):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = resolve_labels(_stream(spec))
    assert all(e.label is not None for e in out)
    annotated = {a[0] for a in spec if a is not None}
    assert {e.label for e in out} <= annotated | {OTHER}


def test_event_log_round_trip():
    events = generate_ambient_stream(AmbientSynthConfig(days=2, events_per_day=150, seed=3))
    text = serialize_event_log(events)
    parsed = parse_event_log(text)
    assert parsed.malformed == []
    assert [(e.timestamp, e.sensor_id, e.value, e.annotation) for e in parsed.events] == [
        (e.timestamp, e.sensor_id, e.value, e.annotation) for e in events
    ]
    assert serialize_event_log(parsed.events) == text


def test_resolve_labels_recovers_synthetic_labels():
    events = generate_ambient_stream(AmbientSynthConfig(days=2, events_per_day=200, seed=5))
    parsed = parse_event_log(serialize_event_log(events)).events
    with warnings.catch_warnings():
        # a final single-event visit carries only its begin marker
        warnings.simplefilter("ignore", LabelWarning)
        resolved = resolve_labels(parsed)
    assert [e.label for e in resolved] == [e.label for e in events]


SIMPLE = SampleTableSchema(channel_columns=(1, 2), label_column=0, sample_rate=50.0, excluded_labels=frozenset({0}))


def test_sample_table_basic():
    rows = parse_sample_table("1 0.5 1.5\n1 0.6 1.6\n2 0.7 1.7\n", SIMPLE, "s1")
    assert [r.index for r in rows] == [0, 1, 2]
    assert rows[2].channels == (0.7, 1.7) and rows[2].label == 2 and rows[0].subject_id == "s1"


def test_sample_table_interpolates_interior_gap():
    rows = parse_sample_table("1 1.0 0\n1 NaN 0\n1 3.0 0\n", SIMPLE)
    assert rows[1].channels[0] == pytest.approx(2.0)
    assert {r.run for r in rows} == {0}


def test_sample_table_drops_edge_missing_and_long_gaps():
    edge = parse_sample_table("1 NaN 0\n1 1.0 0\n1 2.0 0\n", SIMPLE)
    assert [r.channels[0] for r in edge] == [1.0, 2.0]
    long_gap = "1 0.0 0\n" + "1 NaN 0\n" * 11 + "1 5.0 0\n"
    rows = parse_sample_table(long_gap, SIMPLE)
    assert len(rows) == 2 and rows[0].run != rows[1].run


def test_sample_table_excluded_labels():
    assert parse_sample_table("0 1 2\n0 3 4\n", SIMPLE) == []
    rows = parse_sample_table("1 1 1\n0 2 2\n1 3 3\n", SIMPLE)
    assert len(rows) == 2 and rows[0].run != rows[1].run


def test_sample_table_non_numeric_cell():
    with pytest.raises(DataFormatError, match="row 1"):
        parse_sample_table("1 1 1\n1 x 1\n", SIMPLE)


def test_sample_table_round_trip():
    rows = parse_sample_table("1 0.25 -3.5\n2 1e-3 7.0\n", SIMPLE, "s")
    again = parse_sample_table(serialize_sample_table(rows), SIMPLE, "s")
    assert again == rows


def test_dataset_schemas():
    assert len(PAMAP2.channel_columns) == 27 and PAMAP2.sample_rate == 100.0
    assert 0 in PAMAP2.excluded_labels and 24 not in PAMAP2.excluded_labels
    assert len(MHEALTH.channel_columns) == 21 and 3 not in MHEALTH.channel_columns


def test_mhealth_row_parses():
    cells = [str(float(i)) for i in range(23)] + ["4"]
    (row,) = parse_sample_table(" ".join(cells), MHEALTH, "subject2")
    assert row.label == 4 and len(row.channels) == 21 and row.channels[3] == 5.0


def test_manifest_errors(tmp_path):
    with pytest.raises(ConfigError, match="nope.json"):
        load_manifest(tmp_path / "nope.json")
    (tmp_path / "m.json").write_text(json.dumps({"schema": "mhealth", "files": ["missing.log"]}))
    with pytest.raises(ConfigError, match="missing.log"):
        load_manifest(tmp_path / "m.json")
    (tmp_path / "u.json").write_text(json.dumps({"schema": "bogus", "files": []}))
    with pytest.raises(ConfigError):
        load_manifest(tmp_path / "u.json")


def test_manifest_resolves_relative_paths(tmp_path):
    (tmp_path / "d.log").write_text("1 1 1\n")
    (tmp_path / "m.json").write_text(json.dumps({
        "schema": "table",
        "table": {"channel_columns": [1, 2], "label_column": 0, "sample_rate": 10},
        "files": [{"path": "d.log", "subject": 7}],
    }))
    man = load_manifest(tmp_path / "m.json")
    assert man.files[0].path == tmp_path / "d.log" and man.files[0].subject == "7"
    assert man.sample_schema().channel_columns == (1, 2)
