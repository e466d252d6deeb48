"""Raw-sample contamination measures between training and test windows."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ConfigError, FoldAssignment, LabeledInstance, Window, raw_overlap

Span = Window | LabeledInstance


class SpanIndex:
    """Per-source merged interval index over a set of raw spans."""

    def __init__(self, spans: Sequence[Span]):
        by_source: dict[str, list[tuple[int, int]]] = defaultdict(list)
        for s in spans:
            by_source[s.source_id].append((s.start, s.end))
        self._starts: dict[str, np.ndarray] = {}
        self._ends: dict[str, np.ndarray] = {}
        for src, ivs in by_source.items():
            ivs.sort()
            merged: list[list[int]] = []
            for a, b in ivs:
                # half-open: [0,6) and [6,12) share nothing, so only merge on a < end
                if merged and a < merged[-1][1]:
                    merged[-1][1] = max(merged[-1][1], b)
                else:
                    merged.append([a, b])
            arr = np.array(merged, dtype=np.int64)
            self._starts[src] = arr[:, 0]
            self._ends[src] = arr[:, 1]

    def intervals(self, source_id: str) -> list[tuple[int, int]]:
        """Merged ``[start, end)`` intervals indexed for one source."""
        if source_id not in self._starts:
            return []
        return [(int(a), int(b)) for a, b in zip(self._starts[source_id], self._ends[source_id])]

    def gap(self, span: Span) -> int | None:
        """Raw-index distance to the nearest indexed span (0 when overlapping).

        None when the source has no indexed spans.
        """
        starts = self._starts.get(span.source_id)
        if starts is None:
            return None
        ends = self._ends[span.source_id]
        # merged intervals are disjoint and sorted, so ends are sorted too
        j = int(np.searchsorted(starts, span.end, side="left"))  # intervals starting before span.end
        best = None
        if j > 0:
            prev_end = int(ends[j - 1])
            best = 0 if prev_end > span.start else span.start - prev_end
        if j < len(starts):
            d = int(starts[j]) - span.end
            best = d if best is None else min(best, d)
        return best

    def overlaps(self, span: Span) -> bool:
        starts = self._starts.get(span.source_id)
        if starts is None:
            return False
        j = int(np.searchsorted(starts, span.end, side="left"))
        return j > 0 and int(self._ends[span.source_id][j - 1]) > span.start


def leakage_fraction(train: Sequence[Span], test: Sequence[Span]) -> float:
    """Share of test spans that share at least one raw index with a train span."""
    if not test:
        raise ConfigError("leakage of an empty test set is undefined")
    index = SpanIndex(train)
    return sum(index.overlaps(t) for t in test) / len(test)


def near_duplicate_fraction(train: Sequence[Span], test: Sequence[Span], k: int | None = None) -> float:
    """Share of test spans lying within ``k`` raw indices of a train span.

    Overlapping spans count (distance 0). ``k`` defaults to the test window
    size, catching adjacent non-overlapping windows.
    """
    if not test:
        raise ConfigError("near-duplicate rate of an empty test set is undefined")
    index = SpanIndex(train)
    hits = 0
    for t in test:
        d = index.gap(t)
        if d is not None and d <= (t.end - t.start if k is None else k):
            hits += 1
    return hits / len(test)


def overlap_histogram(windows: Sequence[Span]) -> dict[int, int]:
    """Histogram of raw overlap between consecutive windows of each source."""
    by_source: dict[str, list[Span]] = defaultdict(list)
    for w in windows:
        by_source[w.source_id].append(w)
    hist: Counter[int] = Counter()
    for ws in by_source.values():
        ws = sorted(ws, key=lambda w: (w.start, w.end))
        for a, b in zip(ws, ws[1:]):
            hist[raw_overlap(a, b)] += 1
    return dict(sorted(hist.items()))


@dataclass(frozen=True)
class IntegrityReport:
    violations: tuple[str, ...]  # group keys found in more than one partition
    partitions_by_group: dict

    @property
    def ok(self) -> bool:
        return not self.violations


def group_integrity(assignment: FoldAssignment, instances: Sequence[Span]) -> IntegrityReport:
    where: dict[str, set[str]] = defaultdict(set)
    for name, idx in assignment.partitions.items():
        for i in idx:
            where[instances[i].group_key].add(name)
    bad = tuple(sorted(g for g, parts in where.items() if len(parts) > 1))
    return IntegrityReport(bad, {g: sorted(where[g]) for g in bad})


def assignment_leakage(assignment: FoldAssignment, instances: Sequence[Span]) -> float:
    """Worst leakage over every partition held out against the rest."""
    worst = 0.0
    for name, idx in assignment.partitions.items():
        if not idx:
            continue
        train, test = assignment.holdout(name)
        worst = max(worst, leakage_fraction([instances[i] for i in train], [instances[i] for i in test]))
    return worst
