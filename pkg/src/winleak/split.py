"""Train/test partitioning schemes, biased and group-constrained."""

from __future__ import annotations

import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import ConfigError, FoldAssignment, LabeledInstance, Scheme, Window

Instance = LabeledInstance | Window


class SplitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SplitSpec:
    scheme: Scheme
    ratios: tuple[int, ...] = (80, 20)
    k: int = 5
    seed: int | None = None  # None -> the experiment seed
    assignments: Mapping[str, str] = field(default_factory=dict)  # group -> partition
    test_fold: int | None = 0  # k-fold schemes: fold used as holdout; None -> every fold

    def __post_init__(self) -> None:
        if self.scheme is Scheme.RANDOM_SHUFFLE:
            if sum(self.ratios) != 100 or len(self.ratios) not in (2, 3) or min(self.ratios) <= 0:
                raise ConfigError(f"ratios must be 2 or 3 positive parts summing to 100, got {self.ratios}")
        elif self.scheme in (Scheme.STRATIFIED_KFOLD, Scheme.GROUP_KFOLD, Scheme.STRATIFIED_GROUP_KFOLD):
            if self.k < 2:
                raise ConfigError(f"k must be >= 2, got {self.k}")
        bad = {p for p in self.assignments.values()} - {"train", "validation", "test"}
        if bad:
            raise ConfigError(f"unknown partitions in assignment map: {sorted(bad)}")


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF))


def _folds(partitions: list[list[int]]) -> dict[str, tuple[int, ...]]:
    return {f"fold{i + 1}": tuple(sorted(p)) for i, p in enumerate(partitions)}


def random_shuffle_split(n: int | Sequence[Instance], ratios: Sequence[int] = (80, 20), seed: int = 0) -> FoldAssignment:
    """Seeded uniform permutation cut at the ratio boundaries.

    Non-training parts get ``floor(n * ratio / 100)`` instances; the
    remainder goes to training. This is the biased baseline.
    """
    n = n if isinstance(n, int) else len(n)
    if n == 0:
        raise ConfigError("cannot split an empty instance set")
    ratios = tuple(ratios)
    if sum(ratios) != 100 or len(ratios) not in (2, 3):
        raise ConfigError(f"ratios must be 2 or 3 parts summing to 100, got {ratios}")
    names = ("train", "test") if len(ratios) == 2 else ("train", "validation", "test")
    sizes = [n * r // 100 for r in ratios[1:]]
    sizes.insert(0, n - sum(sizes))
    if min(sizes) == 0:
        raise ConfigError(f"ratio cut of {n} instances by {ratios} leaves an empty partition")
    perm = _rng(seed).permutation(n)
    parts, pos = {}, 0
    for name, size in zip(names, sizes):
        parts[name] = tuple(sorted(int(i) for i in perm[pos:pos + size]))
        pos += size
    return FoldAssignment(Scheme.RANDOM_SHUFFLE, seed, parts, n, {"ratios": ":".join(map(str, ratios))})


def stratified_kfold(instances: Sequence[Instance], k: int = 5, seed: int = 0) -> FoldAssignment:
    """Per-class round robin over folds after a seeded within-class shuffle.

    Each class starts where the previous one stopped, so per-class and total
    fold sizes both differ by at most one.
    """
    n = len(instances)
    if k < 2:
        raise ConfigError("k must be >= 2")
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of instances ({n})")
    by_class: dict[int, list[int]] = defaultdict(list)
    for i, inst in enumerate(instances):
        by_class[inst.label].append(i)
    small = sorted(c for c, m in by_class.items() if len(m) < k)
    if small:
        warnings.warn(f"classes {small} have fewer than k={k} members", SplitWarning, stacklevel=2)
    rng = _rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in sorted(by_class):
        members = np.array(by_class[c])[rng.permutation(len(by_class[c]))]
        for j, idx in enumerate(members):
            folds[(offset + j) % k].append(int(idx))
        offset += len(members)
    return FoldAssignment(Scheme.STRATIFIED_KFOLD, seed, _folds(folds), n, {"k": str(k)})


def _groups(instances: Sequence[Instance]) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = defaultdict(list)
    for i, inst in enumerate(instances):
        groups[inst.group_key].append(i)
    return groups


def group_kfold(instances: Sequence[Instance], k: int = 5) -> FoldAssignment:
    """Largest group first into the currently smallest fold.

    Deterministic: equal-size groups are taken in key order, equal-size
    folds by lowest index.
    """
    groups = _groups(instances)
    if len(groups) < k:
        raise ConfigError(f"{len(groups)} groups cannot fill k={k} folds")
    order = sorted(groups, key=lambda g: (-len(groups[g]), g))
    folds: list[list[int]] = [[] for _ in range(k)]
    for g in order:
        target = min(range(k), key=lambda f: (len(folds[f]), f))
        folds[target].extend(groups[g])
    return FoldAssignment(Scheme.GROUP_KFOLD, None, _folds(folds), len(instances), {"k": str(k)})


def stratification_cost(fold_counts: np.ndarray, global_prop: np.ndarray) -> float:
    """Sum over folds and classes of squared deviation from the global class mix.

    An empty fold counts as the zero proportion vector.
    """
    sizes = fold_counts.sum(axis=1, keepdims=True)
    props = np.divide(fold_counts, sizes, out=np.zeros_like(fold_counts, dtype=float), where=sizes > 0)
    return float(((props - global_prop) ** 2).sum())


def stratified_group_kfold(instances: Sequence[Instance], k: int = 5, seed: int = 0) -> FoldAssignment:
    """Greedy group placement that keeps fold class mixes near the global mix.

    Groups are placed largest first (seeded shuffle among equal sizes). Each
    goes to the fold that minimises the total squared deviation of fold
    class proportions from the global proportions; ties go to the smaller
    fold, then the lower index. While there are only as many groups left as
    empty folds, groups are forced into empty folds. Group disjointness is
    guaranteed; stratification is best effort.
    """
    groups = _groups(instances)
    if len(groups) < k:
        raise ConfigError(f"{len(groups)} groups cannot fill k={k} folds")
    classes = sorted({inst.label for inst in instances})
    cidx = {c: i for i, c in enumerate(classes)}
    gcounts = {}
    for g, members in groups.items():
        v = np.zeros(len(classes))
        for i in members:
            v[cidx[instances[i].label]] += 1
        gcounts[g] = v
    total = sum(gcounts.values())
    global_prop = total / total.sum()

    keys = sorted(groups)
    shuffled = [keys[i] for i in _rng(seed).permutation(len(keys))]
    order = sorted(shuffled, key=lambda g: -len(groups[g]))  # stable: seeded ties

    fold_counts = np.zeros((k, len(classes)))
    folds: list[list[int]] = [[] for _ in range(k)]
    for pos, g in enumerate(order):
        remaining = len(order) - pos
        empty = [f for f in range(k) if not folds[f]]
        candidates = empty if remaining <= len(empty) else range(k)
        best, best_key = None, None
        for f in candidates:
            fold_counts[f] += gcounts[g]
            key = (stratification_cost(fold_counts, global_prop), len(folds[f]), f)
            fold_counts[f] -= gcounts[g]
            if best_key is None or key < best_key:
                best, best_key = f, key
        fold_counts[best] += gcounts[g]
        folds[best].extend(groups[g])
    return FoldAssignment(Scheme.STRATIFIED_GROUP_KFOLD, seed, _folds(folds), len(instances), {"k": str(k)})


def loso_split(instances: Sequence[Instance]) -> list[FoldAssignment]:
    """One train/test assignment per subject (group key), in key order."""
    groups = _groups(instances)
    if len(groups) < 2:
        raise ConfigError(
            "leave-one-subject-out needs at least 2 subjects; "
            "with a single subject group by collection date instead"
        )
    out = []
    n = len(instances)
    for g in sorted(groups):
        test = set(groups[g])
        parts = {
            "train": tuple(i for i in range(n) if i not in test),
            "test": tuple(sorted(test)),
        }
        out.append(FoldAssignment(Scheme.LOSO, None, parts, n, {"test_group": g}))
    return out


def explicit_holdout(instances: Sequence[Instance], assignment: Mapping[str, str]) -> FoldAssignment:
    """Partition by a group -> {train, validation, test} map; unmapped groups train."""
    groups = _groups(instances)
    absent = sorted(set(assignment) - set(groups))
    if absent:
        raise ConfigError(f"mapped groups absent from data: {absent}")
    parts: dict[str, list[int]] = {"train": [], "validation": [], "test": []}
    for g, members in groups.items():
        target = assignment.get(g, "train")
        if target not in parts:
            raise ConfigError(f"unknown partition {target!r} for group {g!r}")
        parts[target].extend(members)
    return FoldAssignment(
        Scheme.EXPLICIT_HOLDOUT,
        None,
        {name: tuple(sorted(idx)) for name, idx in parts.items() if idx or name == "train"},
        len(instances),
        {"assignment": ",".join(f"{g}:{p}" for g, p in sorted(assignment.items()))},
    )


def make_assignments(instances: Sequence[Instance], spec: SplitSpec) -> list[FoldAssignment]:
    """All assignments a spec produces (several only for LOSO)."""
    s = spec.scheme
    seed = spec.seed or 0
    if s is Scheme.RANDOM_SHUFFLE:
        return [random_shuffle_split(len(instances), spec.ratios, seed)]
    if s is Scheme.STRATIFIED_KFOLD:
        return [stratified_kfold(instances, spec.k, seed)]
    if s is Scheme.GROUP_KFOLD:
        return [group_kfold(instances, spec.k)]
    if s is Scheme.STRATIFIED_GROUP_KFOLD:
        return [stratified_group_kfold(instances, spec.k, seed)]
    if s is Scheme.LOSO:
        return loso_split(instances)
    if s is Scheme.EXPLICIT_HOLDOUT:
        return [explicit_holdout(instances, spec.assignments)]
    raise ConfigError(f"unknown scheme {s}")


def evaluation_folds(assignment: FoldAssignment, test_fold: int | None = 0) -> list[tuple[list[int], list[int]]]:
    """(train, test) index pairs for evaluating an assignment.

    Holdout assignments yield one pair with validation merged into training.
    K-fold assignments yield the selected fold, or every fold when
    ``test_fold`` is None.
    """
    if "test" in assignment.partitions:
        return [assignment.holdout("test")]
    names = assignment.fold_names()
    chosen = names if test_fold is None else [names[test_fold % len(names)]]
    return [assignment.holdout(name) for name in chosen]


def group_census(instances: Sequence[Instance], assignment: FoldAssignment) -> dict[str, Counter]:
    """Per partition, how many instances each group contributes."""
    return {
        name: Counter(instances[i].group_key for i in idx)
        for name, idx in assignment.partitions.items()
    }
