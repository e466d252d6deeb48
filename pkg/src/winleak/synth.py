"""Synthetic labelled streams with tunable temporal correlation.

Both generators run a semi-Markov activity process: the next activity is
uniform over the others (no self-transitions) and each visit lasts a
geometric number of events/samples with the configured mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Literal

import numpy as np

from .core import Annotation, ConfigError, SampleRow, SensorEvent, SensorKind

START_DATE = datetime(2009, 10, 16)


@dataclass(frozen=True)
class AmbientSynthConfig:
    mode: Literal["ambient"] = "ambient"
    activities: int = 8
    sensors: int = 20  # binary (motion + door) sensors
    temperature_sensors: int = 2
    rooms: int = 5
    mean_duration: float = 60.0  # events per activity visit
    concentration: float = 5.0  # inf -> each activity fires only its mode sensor
    noise: float = 0.05  # share of events from a uniformly random sensor
    temperature_rate: float = 0.02  # share of events that are temperature readings
    days: int = 10
    events_per_day: int = 300
    seed: int = 42

    def __post_init__(self) -> None:
        for name in ("activities", "sensors", "rooms", "days", "events_per_day"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.mean_duration < 1:
            raise ConfigError("mean_duration must be >= 1")
        if self.noise < 0 or not 0 <= self.temperature_rate < 1 or self.temperature_sensors < 0:
            raise ConfigError("noise and rates must be non-negative")
        if self.concentration < 0:
            raise ConfigError("concentration must be >= 0")


@dataclass(frozen=True)
class BodySynthConfig:
    mode: Literal["body"] = "body"
    activities: int = 6
    channels: int = 9
    subjects: int = 8
    subject_offset_scale: float = 1.0
    mean_duration: float = 500.0  # samples per activity visit
    samples_per_subject: int = 6000
    amplitude_spread: float = 0.5  # activity amplitudes are 1 +- spread/2
    noise: float = 1.0  # per-sample Gaussian noise std
    sample_rate: float = 50.0
    seed: int = 42

    def __post_init__(self) -> None:
        for name in ("activities", "channels", "subjects", "samples_per_subject"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.mean_duration < 1 or self.sample_rate <= 0:
            raise ConfigError("mean_duration must be >= 1 and sample_rate > 0")
        if self.noise < 0 or self.subject_offset_scale < 0 or self.amplitude_spread < 0:
            raise ConfigError("noise, offset scale and amplitude spread must be >= 0")


SynthConfig = AmbientSynthConfig | BodySynthConfig


def activity_names(n: int) -> list[str]:
    return [f"activity_{i + 1}" for i in range(n)]


def _durations_and_labels(rng: np.random.Generator, n_items: int, n_activities: int, mean: float) -> np.ndarray:
    """Activity index for each of ``n_items`` consecutive items."""
    p = min(1.0, 1.0 / mean)
    labels = np.empty(n_items, dtype=np.int64)
    pos = 0
    current = int(rng.integers(n_activities))
    while pos < n_items:
        d = int(rng.geometric(p))
        labels[pos:pos + d] = current
        pos += d
        if n_activities > 1:
            nxt = int(rng.integers(n_activities - 1))
            current = nxt if nxt < current else nxt + 1
    return labels


def ambient_sensors(config: AmbientSynthConfig) -> tuple[list[str], list[SensorKind], dict[str, str]]:
    """Sensor ids, kinds and the sensor -> room map of the synthetic home."""
    n_door = max(1, config.sensors // 7) if config.sensors > 1 else 0
    n_motion = config.sensors - n_door
    ids = [f"M{i + 1:03d}" for i in range(n_motion)] + [f"D{i + 1:03d}" for i in range(n_door)]
    kinds = [SensorKind.MOTION] * n_motion + [SensorKind.DOOR] * n_door
    rooms = [f"room{i * config.rooms // config.sensors}" for i in range(config.sensors)]
    # doors sit in the room of the motion sensor they interleave with
    location = dict(zip(ids, rooms))
    for j in range(config.temperature_sensors):
        tid = f"T{j + 1:03d}"
        ids.append(tid)
        kinds.append(SensorKind.TEMPERATURE)
        location[tid] = f"room{j % config.rooms}"
    return ids, kinds, location


def ambient_sensor_distributions(config: AmbientSynthConfig) -> np.ndarray:
    """Per-activity firing probabilities over the binary sensors.

    Sensor similarity to an activity is 1 for its mode sensor, 0.5 for the
    mode's room mates and 0 otherwise; probabilities are a softmax of
    ``concentration * similarity``.
    """
    n = config.sensors
    _, _, location = ambient_sensors(config)
    rooms = [location[s] for s in ambient_sensors(config)[0][:n]]
    dist = np.zeros((config.activities, n))
    for a in range(config.activities):
        mode = (a * n) // config.activities
        sim = np.array([1.0 if s == mode else 0.5 if rooms[s] == rooms[mode] else 0.0 for s in range(n)])
        if math.isinf(config.concentration):
            dist[a, mode] = 1.0
        else:
            w = np.exp(config.concentration * (sim - 1.0))
            dist[a] = w / w.sum()
    return dist


def _day_times(rng: np.random.Generator, n: int) -> np.ndarray:
    """Strictly increasing microsecond offsets within one day."""
    gaps = rng.exponential(size=n + 1)
    t = np.floor(np.cumsum(gaps)[:-1] / gaps.sum() * 86_399_000_000).astype(np.int64)
    for i in range(1, n):
        if t[i] <= t[i - 1]:
            t[i] = t[i - 1] + 1
    return t


def generate_ambient_stream(config: AmbientSynthConfig = AmbientSynthConfig()) -> list[SensorEvent]:
    """Labelled, annotated smart-home event stream spanning ``config.days`` days.

    Each visit's first event carries a begin marker and its last event an
    end marker (single-event visits carry only the begin marker).
    """
    rng = np.random.default_rng(config.seed)
    ids, kinds, location = ambient_sensors(config)
    names = activity_names(config.activities)
    dist = ambient_sensor_distributions(config)
    n_bin = config.sensors
    n_total = config.days * config.events_per_day
    acts = _durations_and_labels(rng, n_total, config.activities, config.mean_duration)
    noisy = rng.random(n_total) < config.noise
    is_temp = (rng.random(n_total) < config.temperature_rate) if config.temperature_sensors else np.zeros(n_total, bool)
    on_draw = rng.random(n_total)
    uniform_pick = rng.integers(n_bin, size=n_total)
    temp_pick = rng.integers(max(1, config.temperature_sensors), size=n_total)
    temp_noise = rng.normal(0, 0.3, size=n_total)
    cdf = np.cumsum(dist, axis=1)
    u = rng.random(n_total)
    activity_pick = np.array([min(int(np.searchsorted(cdf[a], x, side="right")), n_bin - 1) for a, x in zip(acts, u)])

    offsets = np.concatenate([_day_times(rng, config.events_per_day) for _ in range(config.days)])
    events: list[SensorEvent] = []
    for i in range(n_total):
        day = i // config.events_per_day
        ts = START_DATE + timedelta(days=day, microseconds=int(offsets[i]))
        act = names[acts[i]]
        first = i == 0 or acts[i - 1] != acts[i]
        last = i == n_total - 1 or acts[i + 1] != acts[i]
        ann = Annotation(act, "begin") if first else Annotation(act, "end") if last else None
        if is_temp[i]:
            j = int(temp_pick[i])
            hour = ts.hour + ts.minute / 60
            value = float(round(21.0 + 1.5 * math.sin(2 * math.pi * (hour - 9) / 24) + 0.5 * j + temp_noise[i], 2))
            sid = ids[n_bin + j]
            events.append(SensorEvent(ts, sid, SensorKind.TEMPERATURE, value, repr(value), ann, act))
            continue
        s = int(uniform_pick[i] if noisy[i] else activity_pick[i])
        kind = kinds[s]
        if kind is SensorKind.MOTION:
            on = bool(on_draw[i] < 0.6)
            raw = "ON" if on else "OFF"
        else:
            on = bool(on_draw[i] < 0.5)
            raw = "OPEN" if on else "CLOSE"
        events.append(SensorEvent(ts, ids[s], kind, on, raw, ann, act))
    return events


def ambient_location_map(config: AmbientSynthConfig) -> dict[str, str]:
    return ambient_sensors(config)[2]


def body_parameters(config: BodySynthConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Amplitudes and frequencies per (activity, channel), offsets per (subject, channel)."""
    rng = np.random.default_rng([config.seed, 1])
    amp = 1.0 + config.amplitude_spread * (rng.random((config.activities, config.channels)) - 0.5)
    freq = rng.uniform(0.5, 4.0, size=(config.activities, config.channels))
    offsets = rng.normal(0.0, config.subject_offset_scale, size=(config.subjects, config.channels))
    return amp, freq, offsets


def generate_body_stream(config: BodySynthConfig = BodySynthConfig()) -> dict[str, list[SampleRow]]:
    """Per-subject sample streams of noisy activity sinusoids plus subject offsets.

    Labels are 1-based activity ids. Each visit draws a fresh phase.
    """
    amp, freq, offsets = body_parameters(config)
    out: dict[str, list[SampleRow]] = {}
    for s in range(config.subjects):
        rng = np.random.default_rng([config.seed, 2, s])
        n = config.samples_per_subject
        acts = _durations_and_labels(rng, n, config.activities, config.mean_duration)
        starts = np.flatnonzero(np.r_[True, acts[1:] != acts[:-1]])
        phase = np.zeros((n, config.channels))
        for b, lo in enumerate(starts):
            hi = starts[b + 1] if b + 1 < len(starts) else n
            phase[lo:hi] = rng.uniform(0, 2 * math.pi, size=config.channels)
        t = (np.arange(n) / config.sample_rate)[:, None]
        signal = amp[acts] * np.sin(2 * math.pi * freq[acts] * t + phase) + offsets[s]
        signal += rng.normal(0.0, config.noise, size=signal.shape) if config.noise else 0.0
        sid = f"s{s + 1}"
        out[sid] = [
            SampleRow(i, tuple(float(v) for v in signal[i]), int(acts[i]) + 1, sid)
            for i in range(n)
        ]
    return out
