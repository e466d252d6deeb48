"""Feature extraction for event windows and sample windows."""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import ConfigError, SampleRow, SensorEvent, SensorKind, Window


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise ConfigError("feature names must be unique")

    def __len__(self) -> int:
        return len(self.names)

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256("\n".join(self.names).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class MIMatrix:
    """First-order sensor transition frequencies.

    ``matrix[i, j]`` is the share of consecutive event pairs in which sensor
    ``i`` fires and sensor ``j`` fires next.
    """

    sensors: tuple[str, ...]
    matrix: np.ndarray
    n_pairs: int = 0
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        self._index.update({s: i for i, s in enumerate(self.sensors)})

    def index(self, sensor_id: str) -> int | None:
        return self._index.get(sensor_id)

    def __getitem__(self, pair: tuple[str, str]) -> float:
        i, j = self.index(pair[0]), self.index(pair[1])
        if i is None or j is None:
            return 0.0
        return float(self.matrix[i, j])


def compute_mi_matrix(
    sequences: Sequence[SensorEvent] | Iterable[Sequence[SensorEvent]],
    sensors: Sequence[str] | None = None,
) -> MIMatrix:
    """Transition-frequency matrix over one or more contiguous event runs.

    Pairs never cross run boundaries. Pass training data only: fitting on
    the full dataset leaks test windows into the weights.
    """
    seqs = list(sequences)
    if seqs and isinstance(seqs[0], SensorEvent):
        seqs = [seqs]
    if sensors is None:
        sensors = sorted({e.sensor_id for seq in seqs for e in seq})
    sensors = tuple(sensors)
    index = {s: i for i, s in enumerate(sensors)}
    counts = np.zeros((len(sensors), len(sensors)))
    for seq in seqs:
        ids = np.array([index[e.sensor_id] for e in seq if e.sensor_id in index], dtype=np.int64)
        if len(ids) >= 2:
            np.add.at(counts, (ids[:-1], ids[1:]), 1)
    total = int(counts.sum())
    if total == 0:
        warnings.warn("fewer than 2 events in MI history; using an all-zero matrix", stacklevel=2)
        return MIMatrix(sensors, counts, 0)
    return MIMatrix(sensors, counts / total, total)


def cyclic_encode(value: float, period: float) -> tuple[float, float]:
    if period <= 0:
        raise ConfigError("period must be positive")
    angle = 2 * math.pi * value / period
    return math.sin(angle), math.cos(angle)


def window_entropy(sensor_ids: Sequence[str]) -> float:
    """Shannon entropy in bits of the sensor-id distribution in a window."""
    if not sensor_ids:
        raise ConfigError("entropy of an empty window")
    _, counts = np.unique(np.asarray(sensor_ids), return_counts=True)
    p = counts / counts.sum()
    return float(max(0.0, -(p * np.log2(p)).sum()))


def sparsity(counts: Sequence[float]) -> float:
    counts = np.asarray(counts, dtype=float)
    if counts.size == 0:
        raise ConfigError("sparsity of a zero-length vector")
    return 1.0 - np.count_nonzero(counts) / counts.size


class EventFeatureSchema:
    """Slot layout for smart-home event windows.

    Built from the sensor inventory and a sensor -> room map. Activation
    slots exist for motion and door sensors; rooms are one-hot encoded for
    the last event and the last motion event.
    """

    def __init__(self, sensor_kinds: Mapping[str, SensorKind], location_map: Mapping[str, str]):
        missing = sorted(s for s in sensor_kinds if s not in location_map)
        if missing:
            raise ConfigError(f"sensors missing from location map: {missing}")
        self.sensor_kinds = dict(sensor_kinds)
        self.location_map = dict(location_map)
        self.activation_sensors = tuple(sorted(s for s, k in sensor_kinds.items() if k.is_binary))
        self.rooms = tuple(sorted({location_map[s] for s in sensor_kinds}))
        self._act_index = {s: i for i, s in enumerate(self.activation_sensors)}
        self._room_index = {r: i for i, r in enumerate(self.rooms)}
        names = ["hour_sin", "hour_cos", "dow_sin", "dow_cos"]
        names += [f"act[{s}]" for s in self.activation_sensors]
        names += ["last_status", "avg_temp", "temp_present", "entropy", "sparsity"]
        names += [f"last_location[{r}]" for r in self.rooms]
        names += [f"last_motion_location[{r}]" for r in self.rooms]
        self.schema = FeatureSchema(tuple(names))
        self._off_act = 4
        self._off_rest = 4 + len(self.activation_sensors)
        self._off_loc = self._off_rest + 5
        self._off_mloc = self._off_loc + len(self.rooms)

    @classmethod
    def from_events(cls, events: Iterable[SensorEvent], location_map: Mapping[str, str]) -> "EventFeatureSchema":
        kinds: dict[str, SensorKind] = {}
        for e in events:
            kinds.setdefault(e.sensor_id, e.kind)
        return cls(kinds, location_map)

    def room_of(self, sensor_id: str) -> int:
        try:
            return self._room_index[self.location_map[sensor_id]]
        except KeyError:
            raise ConfigError(f"sensor {sensor_id!r} absent from location map") from None


def event_window_features(
    events: Sequence[SensorEvent], mi: MIMatrix, layout: EventFeatureSchema
) -> np.ndarray:
    """Feature vector for one event window (``events`` is the window's content)."""
    if not events:
        raise ConfigError("empty event window")
    x = np.zeros(len(layout.schema))
    last = events[-1]
    ts = last.timestamp
    hour = ts.hour + ts.minute / 60 + ts.second / 3600
    x[0], x[1] = cyclic_encode(hour, 24)
    x[2], x[3] = cyclic_encode(ts.weekday(), 7)

    counts = np.zeros(len(layout.activation_sensors))
    temps = []
    last_motion = None
    for e in events:
        if e.kind is SensorKind.TEMPERATURE:
            temps.append(float(e.value))
            continue
        if e.sensor_id not in layout._act_index:
            raise ConfigError(f"sensor {e.sensor_id!r} absent from the feature layout")
        if e.kind is SensorKind.MOTION:
            last_motion = e
            if e.value:
                counts[layout._act_index[e.sensor_id]] += 1
        else:
            counts[layout._act_index[e.sensor_id]] += 1

    weights = np.array([mi[s, last.sensor_id] for s in layout.activation_sensors])
    x[layout._off_act:layout._off_rest] = counts * weights
    r = layout._off_rest
    x[r] = 1.0 if (last.kind.is_binary and last.value) else 0.0
    if temps:
        x[r + 1] = float(np.mean(temps))
        x[r + 2] = 1.0
    x[r + 3] = window_entropy([e.sensor_id for e in events])
    x[r + 4] = sparsity(counts) if len(counts) else 1.0
    x[layout._off_loc + layout.room_of(last.sensor_id)] = 1.0
    if last_motion is not None:
        x[layout._off_mloc + layout.room_of(last_motion.sensor_id)] = 1.0
    return x


def event_features(
    events: Sequence[SensorEvent],
    windows: Sequence[Window],
    mi: MIMatrix,
    layout: EventFeatureSchema,
) -> np.ndarray:
    out = np.zeros((len(windows), len(layout.schema)))
    for i, w in enumerate(windows):
        out[i] = event_window_features(events[w.start:w.end], mi, layout)
    return out


STAT_NAMES = ("mean", "std", "min", "max")


def sample_stats_schema(n_channels: int) -> FeatureSchema:
    return FeatureSchema(tuple(f"ch{c}_{s}" for c in range(n_channels) for s in STAT_NAMES))


def sample_window_stats(window: np.ndarray | Sequence[SampleRow]) -> np.ndarray:
    """Per-channel mean, population std, min and max, in channel order."""
    x = _as_matrix(window)
    if x.shape[0] == 0:
        raise ConfigError("empty sample window")
    stats = np.stack([x.mean(axis=0), x.std(axis=0), x.min(axis=0), x.max(axis=0)], axis=1)
    return stats.reshape(-1)


def sample_features(samples: Sequence[SampleRow] | np.ndarray, windows: Sequence[Window]) -> np.ndarray:
    data = _as_matrix(samples)
    out = np.zeros((len(windows), 4 * data.shape[1]))
    for i, w in enumerate(windows):
        out[i] = sample_window_stats(data[w.start:w.end])
    return out


def _as_matrix(window: np.ndarray | Sequence[SampleRow]) -> np.ndarray:
    if isinstance(window, np.ndarray):
        return window if window.ndim == 2 else window.reshape(-1, 1)
    return np.array([r.channels for r in window], dtype=float).reshape(len(window), -1)


@dataclass(frozen=True)
class ChannelGraph:
    n_channels: int
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_channels, self.n_channels), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a


def pearson_matrix(x: np.ndarray) -> np.ndarray:
    """Channel-by-channel Pearson r; zero-variance channels get r = 0."""
    x = np.asarray(x, dtype=float)
    centered = x - x.mean(axis=0)
    ss = np.sqrt((centered**2).sum(axis=0))
    ok = ss > 0
    r = np.zeros((x.shape[1], x.shape[1]))
    if ok.any():
        z = centered[:, ok] / ss[ok]
        r[np.ix_(ok, ok)] = np.clip(z.T @ z, -1.0, 1.0)
    return r


def correlation_graph(window: np.ndarray | Sequence[SampleRow], threshold: float = 0.2) -> ChannelGraph:
    """Undirected graph with an edge wherever channel correlation exceeds ``threshold``."""
    x = _as_matrix(window)
    if x.shape[0] < 2:
        raise ConfigError("correlation needs at least 2 samples")
    r = pearson_matrix(x)
    edges, weights = [], []
    for i in range(x.shape[1]):
        for j in range(i + 1, x.shape[1]):
            if r[i, j] > threshold:
                edges.append((i, j))
                weights.append(float(r[i, j]))
    return ChannelGraph(x.shape[1], tuple(edges), tuple(weights))
