from __future__ import annotations

from datetime import datetime, timedelta

import numpy as np
import pytest

from winleak.core import SensorEvent, SensorKind, Window


def sliding_windows(n_windows: int, size: int, step: int, source: str = "s", label_of=None, group: str | None = None):
    """Consecutive fixed-size windows over one source."""
    out = []
    for i in range(n_windows):
        lab = 0 if label_of is None else label_of(i)
        out.append(Window(source, i * step, i * step + size, lab, group or source))
    return out


def brute_leakage(train, test) -> float:
    """O(N^2) reference: share of test spans intersecting any train span."""
    hit = 0
    for t in test:
        for r in train:
            if r.source_id == t.source_id and min(r.end, t.end) > max(r.start, t.start):
                hit += 1
                break
    return hit / len(test)


def motion(ts: datetime, sid: str, on: bool = True, label: str | None = None, annotation=None) -> SensorEvent:
    return SensorEvent(ts, sid, SensorKind.MOTION, on, "ON" if on else "OFF", annotation, label)


@pytest.fixture
def t0() -> datetime:
    return datetime(2009, 10, 16, 6, 0, 0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(7)


def seconds(t: datetime, n: int) -> datetime:
    return t + timedelta(seconds=n)
