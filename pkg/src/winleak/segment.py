"""Sliding-window segmentation of event and sample streams."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import groupby
from typing import Mapping, Sequence

from .core import ClassTable, ConfigError, SampleRow, SensorEvent, Window


class Mode(str, Enum):
    EVENT_COUNT = "event-count"
    SAMPLE_COUNT = "sample-count"


class LabelRule(str, Enum):
    LAST_EVENT = "last-event"
    UNIFORM_ACTIVITY = "uniform-activity"


class GroupRule(str, Enum):
    BY_DATE = "by-date"
    BY_SUBJECT = "by-subject"


@dataclass(frozen=True)
class SegmentationSpec:
    mode: Mode
    size: int
    step: int
    label_rule: LabelRule | None = None  # None -> last-event for events, uniform-activity for samples
    group_rule: GroupRule | None = None  # None -> by-date for events, by-subject for samples

    def __post_init__(self) -> None:
        events = Mode(self.mode) is Mode.EVENT_COUNT
        if self.label_rule is None:
            object.__setattr__(self, "label_rule", LabelRule.LAST_EVENT if events else LabelRule.UNIFORM_ACTIVITY)
        if self.group_rule is None:
            object.__setattr__(self, "group_rule", GroupRule.BY_DATE if events else GroupRule.BY_SUBJECT)
        if self.size < 1 or self.step < 1:
            raise ConfigError(f"size and step must be >= 1 (got size={self.size}, step={self.step})")
        if self.step > self.size:
            raise ConfigError(f"step {self.step} exceeds window size {self.size}")

    @property
    def overlap(self) -> int:
        return self.size - self.step

    @property
    def overlap_fraction(self) -> float:
        return 1 - self.step / self.size

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentationSpec":
        return cls(
            Mode(d["mode"]), int(d["size"]), int(d["step"]),
            LabelRule(d["label_rule"]) if d.get("label_rule") else None,
            GroupRule(d["group_rule"]) if d.get("group_rule") else None,
        )


def window_starts(n: int, size: int, step: int) -> range:
    """Starts of all full windows over ``n`` items."""
    if n < size:
        return range(0)
    return range(0, (n - size) // step * step + 1, step)


def window_count(n: int, size: int, step: int) -> int:
    return max(0, (n - size) // step + 1)


def segment_events(
    events: Sequence[SensorEvent],
    spec: SegmentationSpec,
    classes: ClassTable,
    source_id: str = "events",
    subject: str = "0",
) -> list[Window]:
    """Event-count windows labelled by their last event.

    With the by-date rule windows are cut per calendar date, so no window
    spans midnight and every window's raw indices belong to a single group.
    Raw spans index into ``events`` as given.
    """
    if spec.mode is not Mode.EVENT_COUNT:
        raise ConfigError(f"segment_events needs mode event-count, got {spec.mode.value}")
    if spec.label_rule is not LabelRule.LAST_EVENT:
        raise ConfigError("event windows are labelled by their last event")
    if spec.group_rule is GroupRule.BY_DATE:
        runs = []
        pos = 0
        for date, grp in groupby(events, key=lambda e: e.timestamp.date()):
            n = sum(1 for _ in grp)
            runs.append((pos, pos + n, date.isoformat()))
            pos += n
    else:
        runs = [(0, len(events), subject)]

    windows = []
    for lo, hi, key in runs:
        for s in window_starts(hi - lo, spec.size, spec.step):
            last = events[lo + s + spec.size - 1]
            if last.label is None:
                raise ConfigError("events must be labelled before segmentation")
            windows.append(
                Window(source_id, lo + s, lo + s + spec.size, classes.intern(last.label), key)
            )
    return windows


def segment_samples(
    samples: Sequence[SampleRow],
    spec: SegmentationSpec,
    classes: ClassTable,
    source_id: str | None = None,
    names: Mapping[int, str] | None = None,
) -> list[Window]:
    """Sample-count windows over each contiguous run.

    With the uniform-activity rule, windows containing more than one label
    are discarded. Raw spans index into ``samples`` as given; the group key
    is the subject id. ``names`` maps raw label ids to class names.
    """
    if spec.mode is not Mode.SAMPLE_COUNT:
        raise ConfigError(f"segment_samples needs mode sample-count, got {spec.mode.value}")
    if spec.group_rule is not GroupRule.BY_SUBJECT:
        raise ConfigError("sample windows are grouped by subject")
    windows = []
    pos = 0
    for _, grp in groupby(samples, key=lambda r: (r.run, r.subject_id)):
        run = list(grp)
        lo = pos
        pos += len(run)
        labels = [r.label for r in run]
        # start of the current constant-label stretch, per index
        change = [0] * len(run)
        for i in range(1, len(run)):
            change[i] = change[i - 1] if labels[i] == labels[i - 1] else i
        for s in window_starts(len(run), spec.size, spec.step):
            e = s + spec.size
            if spec.label_rule is LabelRule.UNIFORM_ACTIVITY and change[e - 1] > s:
                continue
            lab = run[e - 1].label
            windows.append(
                Window(
                    source_id or run[0].subject_id,
                    lo + s,
                    lo + e,
                    classes.intern(names.get(lab, str(lab)) if names else str(lab)),
                    run[0].subject_id,
                )
            )
    return windows
