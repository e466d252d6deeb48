"""Parsers for smart-home event logs and body-sensor sample tables."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .core import (
    Annotation,
    ConfigError,
    DataFormatError,
    SampleRow,
    SensorEvent,
    SensorKind,
)

OTHER = "other"
MAX_MALFORMED_FRACTION = 0.10
MAX_INTERPOLATED_GAP = 10

_BINARY_VALUES = {"ON": True, "OFF": False, "OPEN": True, "CLOSE": False, "CLOSED": False}


class LabelWarning(UserWarning):
    """Unbalanced activity markers in an annotated log."""


@dataclass(frozen=True)
class EventLogSchema:
    """Layout of a whitespace-separated event log.

    Columns are fixed as date, time, sensor id, value, then an optional
    activity name and begin/end marker.
    """

    timestamp_format: str | None = None  # None -> ISO date + time
    kind_prefixes: Mapping[str, SensorKind] = field(
        default_factory=lambda: {"M": SensorKind.MOTION, "D": SensorKind.DOOR, "T": SensorKind.TEMPERATURE}
    )
    n_columns: int = 4

    def __post_init__(self) -> None:
        if self.n_columns < 4:
            raise ConfigError("an event log needs at least 4 columns")

    def kind_of(self, sensor_id: str) -> SensorKind | None:
        # longest prefix wins
        for prefix in sorted(self.kind_prefixes, key=len, reverse=True):
            if sensor_id.startswith(prefix):
                return self.kind_prefixes[prefix]
        return None


@dataclass(frozen=True)
class SampleTableSchema:
    channel_columns: tuple[int, ...]
    label_column: int
    sample_rate: float
    subject_column: int | None = None  # None -> per-file constant subject
    missing: str = "NaN"
    excluded_labels: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise ConfigError("sample rate must be positive")
        if self.label_column < 0:
            raise ConfigError("label column must exist")
        if not self.channel_columns:
            raise ConfigError("at least one channel column is required")


def _pamap2_channels() -> tuple[int, ...]:
    # per IMU block: temperature, acc16 x3, acc6 x3, gyro x3, mag x3, orientation x4
    cols: list[int] = []
    for base in (3, 20, 37):
        cols += [base + 1, base + 2, base + 3]  # +-16g accelerometer
        cols += [base + 7, base + 8, base + 9]  # gyroscope
        cols += [base + 10, base + 11, base + 12]  # magnetometer
    return tuple(cols)


PAMAP2_MAIN_ACTIVITIES = frozenset({1, 2, 3, 4, 5, 6, 7, 12, 13, 16, 17, 24})

PAMAP2 = SampleTableSchema(
    channel_columns=_pamap2_channels(),
    label_column=1,
    sample_rate=100.0,
    # transient label 0 and the optional activities
    excluded_labels=frozenset(set(range(0, 25)) - PAMAP2_MAIN_ACTIVITIES),
)

MHEALTH = SampleTableSchema(
    # chest acc, then ankle and arm acc/gyro/mag; ECG (cols 3-4) left out
    channel_columns=(0, 1, 2, *range(5, 23)),
    label_column=23,
    sample_rate=50.0,
    excluded_labels=frozenset({0}),
)

CASAS = EventLogSchema()

SAMPLE_SCHEMAS: dict[str, SampleTableSchema] = {"pamap2": PAMAP2, "mhealth": MHEALTH}
EVENT_SCHEMAS: dict[str, EventLogSchema] = {"casas": CASAS}


class ParsedLog(NamedTuple):
    events: list[SensorEvent]
    malformed: list[tuple[int, str]]  # (1-based line number, reason)


def _parse_timestamp(date: str, time: str, fmt: str | None) -> datetime:
    if fmt is None:
        return datetime.fromisoformat(f"{date} {time}")
    return datetime.strptime(f"{date} {time}", fmt)


def _parse_event_line(tokens: list[str], schema: EventLogSchema) -> SensorEvent:
    if len(tokens) not in (4, 6):
        raise ValueError(f"expected 4 or 6 fields, got {len(tokens)}")
    date, time, sensor_id, raw = tokens[:4]
    ts = _parse_timestamp(date, time, schema.timestamp_format)
    kind = schema.kind_of(sensor_id)
    if kind is None:
        raise ValueError(f"unknown sensor type for {sensor_id!r}")
    value: bool | float
    if kind.is_binary:
        if raw.upper() not in _BINARY_VALUES:
            raise ValueError(f"non-binary value {raw!r} for {sensor_id}")
        value = _BINARY_VALUES[raw.upper()]
    else:
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError(f"non-finite temperature {raw!r}")
    annotation = None
    if len(tokens) == 6:
        marker = tokens[5]
        if marker.lower() not in ("begin", "end"):
            raise ValueError(f"unknown activity marker {marker!r}")
        annotation = Annotation(tokens[4], marker)
    return SensorEvent(ts, sensor_id, kind, value, raw, annotation)


def parse_event_log(text: str, schema: EventLogSchema = CASAS) -> ParsedLog:
    """Parse a CASAS-style event log.

    Malformed lines are skipped and reported by line number. If more than
    10% of the non-blank lines are malformed the schema is assumed to be
    wrong and :class:`DataFormatError` is raised.
    """
    events: list[SensorEvent] = []
    malformed: list[tuple[int, str]] = []
    n_lines = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        n_lines += 1
        try:
            events.append(_parse_event_line(tokens, schema))
        except (ValueError, DataFormatError) as exc:
            malformed.append((lineno, str(exc)))
    if n_lines and len(malformed) / n_lines > MAX_MALFORMED_FRACTION:
        first = "; ".join(f"line {n}: {r}" for n, r in malformed[:3])
        raise DataFormatError(
            f"{len(malformed)}/{n_lines} lines malformed (wrong schema?): {first}"
        )
    for prev, cur in zip(events, events[1:]):
        if cur.timestamp < prev.timestamp:
            raise DataFormatError(f"timestamps decrease at {cur.timestamp.isoformat()}")
    return ParsedLog(events, malformed)


def read_event_log(path: str | Path, schema: EventLogSchema = CASAS) -> ParsedLog:
    return parse_event_log(Path(path).read_text(), schema)


def serialize_event_log(events: Sequence[SensorEvent]) -> str:
    lines = []
    for e in events:
        fields = [e.timestamp.date().isoformat(), e.timestamp.time().isoformat(), e.sensor_id]
        if e.raw_value:
            fields.append(e.raw_value)
        elif e.kind.is_binary:
            on, off = ("ON", "OFF") if e.kind is SensorKind.MOTION else ("OPEN", "CLOSE")
            fields.append(on if e.value else off)
        else:
            fields.append(repr(float(e.value)))
        if e.annotation is not None:
            fields += [e.annotation.activity, e.annotation.marker]
        lines.append(" ".join(fields))
    return "\n".join(lines) + ("\n" if lines else "")


def resolve_labels(events: Sequence[SensorEvent]) -> list[SensorEvent]:
    """Give every event an activity label from the begin/end markers.

    Events between a begin marker and its matching end marker (inclusive)
    get that activity; nested spans resolve to the innermost open activity.
    Events outside any span are labelled ``"other"``.
    """
    open_stack: list[str] = []
    out: list[SensorEvent] = []
    for i, e in enumerate(events):
        ann = e.annotation
        closing = False
        if ann is not None:
            if ann.marker.lower() == "begin":
                open_stack.append(ann.activity)
            elif ann.activity in open_stack:
                closing = True
            else:
                warnings.warn(
                    f"event {i}: end of {ann.activity!r} without a matching begin; marker ignored",
                    LabelWarning,
                    stacklevel=2,
                )
        label = open_stack[-1] if open_stack else OTHER
        if closing:
            # the closing event belongs to the activity it closes
            label = ann.activity
            # remove the most recent open span of this activity
            j = len(open_stack) - 1 - open_stack[::-1].index(ann.activity)
            del open_stack[j]
        out.append(replace(e, label=label))
    if open_stack:
        warnings.warn(
            f"activities {open_stack} never ended; spans closed at end of stream",
            LabelWarning,
            stacklevel=2,
        )
    return out


def _interpolate_channel(col: np.ndarray, max_gap: int) -> tuple[np.ndarray, np.ndarray]:
    """Fill interior NaN runs of length <= max_gap linearly.

    Returns the filled column and a boolean mask of rows still missing.
    """
    col = col.copy()
    missing = np.isnan(col)
    if not missing.any():
        return col, missing
    n = len(col)
    i = 0
    while i < n:
        if not missing[i]:
            i += 1
            continue
        j = i
        while j < n and missing[j]:
            j += 1
        # run is [i, j)
        if i > 0 and j < n and j - i <= max_gap:
            left, right = col[i - 1], col[j]
            frac = np.arange(1, j - i + 1) / (j - i + 1)
            col[i:j] = left + (right - left) * frac
            missing[i:j] = False
        i = j
    return col, missing


def parse_sample_table(
    text: str, schema: SampleTableSchema, subject_id: str = "0"
) -> list[SampleRow]:
    """Parse a numeric sample table into rows of selected channels.

    Rows with excluded labels are dropped. Missing channel values are filled
    by linear interpolation when interior and at most 10 rows long; longer
    runs are dropped and split the stream, as are excluded-label stretches.
    Each contiguous stretch of output rows carries its own ``run`` id.
    """
    cols = schema.channel_columns
    raw_rows: list[tuple[list[float], int, str]] = []
    for row_idx, line in enumerate(l for l in text.splitlines() if l.strip()):
        tokens = line.split()
        needed = max(max(cols), schema.label_column, schema.subject_column or 0)
        if len(tokens) <= needed:
            raise DataFormatError(f"row {row_idx}: {len(tokens)} columns, need {needed + 1}")
        values = []
        for c in cols:
            tok = tokens[c]
            if tok == schema.missing:
                values.append(math.nan)
                continue
            try:
                v = float(tok)
            except ValueError:
                raise DataFormatError(f"row {row_idx}, column {c}: non-numeric cell {tok!r}") from None
            if math.isnan(v):
                values.append(math.nan)
            elif not math.isfinite(v):
                raise DataFormatError(f"row {row_idx}, column {c}: non-finite value {tok!r}")
            else:
                values.append(v)
        try:
            label = int(float(tokens[schema.label_column]))
        except ValueError:
            raise DataFormatError(f"row {row_idx}: non-numeric label {tokens[schema.label_column]!r}") from None
        subject = tokens[schema.subject_column] if schema.subject_column is not None else subject_id
        raw_rows.append((values, label, subject))

    if not raw_rows:
        return []
    data = np.array([r[0] for r in raw_rows], dtype=float)
    labels = np.array([r[1] for r in raw_rows])
    subjects = [r[2] for r in raw_rows]
    keep = ~np.isin(labels, list(schema.excluded_labels))

    # contiguous kept stretches are processed independently
    out: list[SampleRow] = []
    run_id = 0
    idx = 0
    n = len(raw_rows)
    i = 0
    while i < n:
        if not keep[i]:
            i += 1
            continue
        j = i
        while j < n and keep[j] and subjects[j] == subjects[i]:
            j += 1
        block = data[i:j]
        still_missing = np.zeros(j - i, dtype=bool)
        filled = np.empty_like(block)
        for c in range(block.shape[1]):
            filled[:, c], m = _interpolate_channel(block[:, c], MAX_INTERPOLATED_GAP)
            still_missing |= m
        # drop unfillable rows; each gap starts a new run
        k = 0
        while k < j - i:
            if still_missing[k]:
                k += 1
                continue
            m = k
            while m < j - i and not still_missing[m]:
                out.append(SampleRow(idx, tuple(float(v) for v in filled[m]), int(labels[i + m]), subjects[i + m], run_id))
                idx += 1
                m += 1
            run_id += 1
            k = m
        i = j
    return out


def read_sample_table(path: str | Path, schema: SampleTableSchema, subject_id: str = "0") -> list[SampleRow]:
    return parse_sample_table(Path(path).read_text(), schema, subject_id)


def serialize_sample_table(rows: Sequence[SampleRow]) -> str:
    """Write rows as ``label ch0 ch1 ...`` lines (label column 0)."""
    return "".join(
        f"{r.label} " + " ".join(repr(v) for v in r.channels) + "\n" for r in rows
    )


@dataclass(frozen=True)
class ManifestFile:
    path: Path
    subject: str | None = None


@dataclass(frozen=True)
class Manifest:
    """Dataset manifest: files, schema name, subjects and the activity table."""

    schema: str
    files: tuple[ManifestFile, ...]
    activities: Mapping[str, str]
    location_map: Mapping[str, str] | None = None
    root: Path = Path(".")
    table: SampleTableSchema | None = None

    @property
    def is_event_log(self) -> bool:
        return self.schema in EVENT_SCHEMAS

    def sample_schema(self) -> SampleTableSchema:
        if self.table is not None:
            return self.table
        try:
            return SAMPLE_SCHEMAS[self.schema]
        except KeyError:
            raise ConfigError(f"unknown sample-table schema {self.schema!r}") from None


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    root = path.parent
    schema = doc.get("schema")
    table = None
    if schema == "table":
        t = doc.get("table")
        if not isinstance(t, dict):
            raise ConfigError(f"{path}: schema 'table' needs a 'table' object")
        try:
            table = SampleTableSchema(
                channel_columns=tuple(int(c) for c in t["channel_columns"]),
                label_column=int(t["label_column"]),
                sample_rate=float(t["sample_rate"]),
                subject_column=t.get("subject_column"),
                missing=str(t.get("missing", "NaN")),
                excluded_labels=frozenset(int(v) for v in t.get("excluded_labels", ())),
            )
        except KeyError as exc:
            raise ConfigError(f"{path}: table schema lacks {exc}") from None
    elif schema not in EVENT_SCHEMAS and schema not in SAMPLE_SCHEMAS:
        raise ConfigError(f"{path}: unknown schema {schema!r}")
    files = []
    for f in doc.get("files", []):
        if isinstance(f, str):
            f = {"path": f}
        fpath = root / f["path"]
        if not fpath.exists():
            raise ConfigError(f"data file not found: {fpath}")
        files.append(ManifestFile(fpath, None if f.get("subject") is None else str(f["subject"])))
    if not files:
        raise ConfigError(f"{path}: manifest lists no files")
    loc = doc.get("location_map")
    if isinstance(loc, str):
        loc_path = root / loc
        if not loc_path.exists():
            raise ConfigError(f"location map not found: {loc_path}")
        loc = json.loads(loc_path.read_text())
    return Manifest(
        schema=schema,
        files=tuple(files),
        activities={str(k): str(v) for k, v in doc.get("activities", {}).items()},
        location_map=loc,
        root=root,
        table=table,
    )
