"""Shared domain types for the windowed-evaluation pipeline.

Raw spans are half-open ``[start, end)`` index intervals over the
post-ingestion order of one stream. Overlap between windows is always
measured on these indices, never on timestamps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np


class WinleakError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(WinleakError, ValueError):
    """Invalid configuration (bad parameters, missing paths, unknown names)."""


class DataFormatError(WinleakError):
    """Input data does not match the declared schema."""


class InvariantError(WinleakError):
    """An internal invariant was violated."""


class SensorKind(str, Enum):
    MOTION = "motion"
    DOOR = "door-contact"
    TEMPERATURE = "temperature"

    @property
    def is_binary(self) -> bool:
        return self is not SensorKind.TEMPERATURE


@dataclass(frozen=True)
class Annotation:
    activity: str
    marker: str  # "begin" | "end", kept verbatim


@dataclass(frozen=True)
class SensorEvent:
    timestamp: datetime
    sensor_id: str
    kind: SensorKind
    value: bool | float
    raw_value: str = ""
    annotation: Annotation | None = None
    label: str | None = None

    def __post_init__(self) -> None:
        if self.kind.is_binary:
            if not isinstance(self.value, bool):
                raise DataFormatError(
                    f"{self.sensor_id}: {self.kind.value} events carry a binary value, got {self.value!r}"
                )
        elif isinstance(self.value, bool) or not math.isfinite(self.value):
            raise DataFormatError(f"{self.sensor_id}: temperature must be a finite real, got {self.value!r}")


@dataclass(frozen=True)
class SampleRow:
    index: int
    channels: tuple[float, ...]
    label: int
    subject_id: str
    run: int = 0  # contiguous run id; a gap in the source stream starts a new run


@dataclass(frozen=True)
class Window:
    source_id: str
    start: int
    end: int
    label: int
    group_key: str

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise InvariantError(f"bad raw span [{self.start}, {self.end})")

    @property
    def raw_span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def size(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class LabeledInstance:
    features: np.ndarray
    label: int
    group_key: str
    source_id: str
    start: int
    end: int

    @property
    def raw_span(self) -> tuple[int, int]:
        return (self.start, self.end)


class Scheme(str, Enum):
    RANDOM_SHUFFLE = "random-shuffle"
    STRATIFIED_KFOLD = "stratified-kfold"
    GROUP_KFOLD = "group-kfold"
    STRATIFIED_GROUP_KFOLD = "stratified-group-kfold"
    LOSO = "loso"
    EXPLICIT_HOLDOUT = "explicit-holdout"

    @property
    def is_grouped(self) -> bool:
        return self not in (Scheme.RANDOM_SHUFFLE, Scheme.STRATIFIED_KFOLD)


@dataclass(frozen=True)
class FoldAssignment:
    """A partition of instance indices into named parts.

    Holdout schemes use ``train``/``validation``/``test``; k-fold schemes use
    ``fold1`` .. ``foldk``.
    """

    scheme: Scheme
    seed: int | None
    partitions: Mapping[str, tuple[int, ...]]
    n_instances: int
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        seen: set[int] = set()
        total = 0
        for idx in self.partitions.values():
            seen.update(idx)
            total += len(idx)
        if total != len(seen) or seen != set(range(self.n_instances)):
            raise InvariantError("partitions must be disjoint and cover every instance")

    def fold_names(self) -> list[str]:
        return list(self.partitions)

    def holdout(self, test: str) -> tuple[list[int], list[int]]:
        """Train indices (every other partition) and test indices for ``test``."""
        if test not in self.partitions:
            raise ConfigError(f"no partition named {test!r}; have {self.fold_names()}")
        train = sorted(i for name, idx in self.partitions.items() if name != test for i in idx)
        return train, sorted(self.partitions[test])

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "seed": self.seed,
            "n_instances": self.n_instances,
            "partitions": {k: list(v) for k, v in self.partitions.items()},
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FoldAssignment":
        return cls(
            scheme=Scheme(d["scheme"]),
            seed=d.get("seed"),
            partitions={k: tuple(v) for k, v in d["partitions"].items()},
            n_instances=int(d["n_instances"]),
            meta=dict(d.get("meta", {})),
        )


class ClassTable:
    """Interns class names to dense integer ids in first-seen order."""

    def __init__(self, names: Iterable[str] = ()) -> None:
        self._names: list[str] = []
        self._ids: dict[str, int] = {}
        for n in names:
            self.intern(n)

    def intern(self, name: str) -> int:
        name = str(name)
        if name not in self._ids:
            self._ids[name] = len(self._names)
            self._names.append(name)
        return self._ids[name]

    def id_of(self, name: str) -> int:
        try:
            return self._ids[str(name)]
        except KeyError:
            raise ConfigError(f"unknown class {name!r}") from None

    def name_of(self, class_id: int) -> str:
        return self._names[class_id]

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: object) -> bool:
        return name in self._ids

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ClassTable) and self._names == other._names

    def __repr__(self) -> str:
        return f"ClassTable({self._names!r})"


def raw_overlap(a: Window | LabeledInstance, b: Window | LabeledInstance) -> int:
    """Number of raw indices shared by two spans; 0 across different sources."""
    if a.source_id != b.source_id:
        return 0
    return max(0, min(a.end, b.end) - max(a.start, b.start))


def instances_from(
    windows: Sequence[Window], features: np.ndarray
) -> list[LabeledInstance]:
    if len(windows) != len(features):
        raise InvariantError(f"{len(windows)} windows but {len(features)} feature rows")
    return [
        LabeledInstance(features[i], w.label, w.group_key, w.source_id, w.start, w.end)
        for i, w in enumerate(windows)
    ]
