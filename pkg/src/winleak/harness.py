"""End-to-end experiment runner: ingest, segment, split, featurize, train, evaluate."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import audit as audit_mod
from .core import (
    ClassTable,
    ConfigError,
    DataFormatError,
    FoldAssignment,
    InvariantError,
    SampleRow,
    SensorEvent,
    Window,
    WinleakError,
)
from .features import (
    EventFeatureSchema,
    FeatureSchema,
    compute_mi_matrix,
    event_features,
    sample_features,
    sample_stats_schema,
)
from .forest import ForestParams, predict, train_forest
from .ingest import (
    EVENT_SCHEMAS,
    load_manifest,
    read_event_log,
    read_sample_table,
    resolve_labels,
    serialize_event_log,
    serialize_sample_table,
)
from .metrics import ConfusionMatrix, accuracy, balanced_accuracy, confusion, per_class_f1, weighted_f1
from .segment import Mode, SegmentationSpec, segment_events, segment_samples
from .split import SplitSpec, evaluation_folds, make_assignments
from .synth import (
    AmbientSynthConfig,
    BodySynthConfig,
    activity_names,
    ambient_location_map,
    generate_ambient_stream,
    generate_body_stream,
)

log = logging.getLogger(__name__)

REPORT_VERSION = 1


def r4(x: float) -> float:
    return round(float(x), 4)


class DatasetSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    manifest: Optional[str] = None
    synth: Optional[Union[AmbientSynthConfig, BodySynthConfig]] = Field(default=None, discriminator="mode")

    @model_validator(mode="after")
    def _exactly_one(self) -> "DatasetSource":
        if (self.manifest is None) == (self.synth is None):
            raise ValueError("dataset needs exactly one of 'manifest' or 'synth'")
        return self


class ExperimentConfig(BaseModel):
    """One experiment: a dataset source plus the pipeline settings.

    ``splits`` holds one spec for ``run``/``audit`` and two (biased,
    unbiased) for ``compare``. Split specs without a seed use ``seed``.
    """

    model_config = ConfigDict(extra="forbid")

    dataset: DatasetSource
    segmentation: SegmentationSpec
    features: Literal["milan", "imu-stats"]
    splits: list[SplitSpec] = Field(min_length=1)
    classifier: ForestParams = ForestParams()
    output_dir: Optional[str] = None
    seed: int = 42

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with ``seed`` applied to the experiment, every split and any synth source."""
        ds = self.dataset
        if ds.synth is not None:
            ds = ds.model_copy(update={"synth": replace(ds.synth, seed=seed)})
        return self.model_copy(
            update={"seed": seed, "dataset": ds, "splits": [replace(s, seed=seed) for s in self.splits]}
        )

    def fingerprint(self) -> str:
        doc = self.model_dump(mode="json", exclude={"output_dir"})
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config not found: {path}")
    try:
        cfg = ExperimentConfig.model_validate_json(path.read_text())
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    # relative manifest paths are relative to the config file
    man = cfg.dataset.manifest
    if man is not None and not Path(man).is_absolute():
        ds = cfg.dataset.model_copy(update={"manifest": str(path.parent / man)})
        cfg = cfg.model_copy(update={"dataset": ds})
    return cfg


def config_schema() -> dict:
    return ExperimentConfig.model_json_schema()


@dataclass
class Dataset:
    """A loaded, labelled dataset ready for segmentation."""

    kind: Literal["events", "samples"]
    classes: ClassTable
    events: list[SensorEvent] = field(default_factory=list)
    samples: list[SampleRow] = field(default_factory=list)
    location_map: dict[str, str] = field(default_factory=dict)
    label_names: dict[int, str] = field(default_factory=dict)
    source_id: str = "events"


@dataclass
class Prepared:
    dataset: Dataset
    windows: list[Window]
    layout: EventFeatureSchema | None
    sample_matrix: np.ndarray | None

    @property
    def schema(self) -> FeatureSchema:
        if self.layout is not None:
            return self.layout.schema
        return sample_stats_schema(self.sample_matrix.shape[1])


class _Stage:
    """Tags errors raised inside a pipeline stage with the stage name."""

    def __init__(self, name: str, timings: dict[str, float]):
        self.name = name
        self.timings = timings

    def __enter__(self) -> "_Stage":
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        self.timings[self.name] = self.timings.get(self.name, 0.0) + time.perf_counter() - self.t0
        if exc is None:
            return False
        if isinstance(exc, WinleakError):
            if not str(exc).startswith("["):
                raise type(exc)(f"[{self.name}] {exc}") from exc
            return False
        if isinstance(exc, (OSError, UnicodeDecodeError)):
            raise DataFormatError(f"[{self.name}] {exc}") from exc
        raise InvariantError(f"[{self.name}] internal error: {exc!r}") from exc


def load_dataset(source: DatasetSource) -> Dataset:
    if source.synth is not None:
        return _synth_dataset(source.synth)
    man = load_manifest(source.manifest)
    if man.is_event_log:
        events: list[SensorEvent] = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for f in man.files:
                parsed = read_event_log(f.path, EVENT_SCHEMAS[man.schema])
                if parsed.malformed:
                    log.warning("%s: skipped %d malformed lines", f.path, len(parsed.malformed))
                events.extend(parsed.events)
            events = resolve_labels(events)
        if man.location_map is None:
            raise ConfigError(f"{source.manifest}: event-log datasets need a location_map")
        classes = ClassTable()
        return Dataset("events", classes, events=events, location_map=dict(man.location_map))
    schema = man.sample_schema()
    rows: list[SampleRow] = []
    for f in man.files:
        subject = f.subject or f.path.stem
        part = read_sample_table(f.path, schema, subject)
        rows.extend(part)
    label_names = {int(k): v for k, v in man.activities.items() if k.lstrip("-").isdigit()}
    return Dataset("samples", ClassTable(), samples=_reindex(rows), label_names=label_names)


def _reindex(rows: Sequence[SampleRow]) -> list[SampleRow]:
    """Concatenate rows into one stream with global indices and unique run ids."""
    out = []
    run_map: dict[tuple[str, int], int] = {}
    for i, r in enumerate(rows):
        key = (r.subject_id, r.run)
        if key not in run_map:
            run_map[key] = len(run_map)
        out.append(replace(r, index=i, run=run_map[key]))
    return out


def _synth_dataset(cfg: AmbientSynthConfig | BodySynthConfig) -> Dataset:
    if isinstance(cfg, AmbientSynthConfig):
        events = generate_ambient_stream(cfg)
        return Dataset("events", ClassTable(), events=events, location_map=ambient_location_map(cfg))
    streams = generate_body_stream(cfg)
    rows = [r for sid in streams for r in streams[sid]]
    names = {i + 1: n for i, n in enumerate(activity_names(cfg.activities))}
    return Dataset("samples", ClassTable(), samples=_reindex(rows), label_names=names)


def prepare(config: ExperimentConfig, timings: dict[str, float]) -> Prepared:
    with _Stage("ingest", timings):
        ds = load_dataset(config.dataset)
    spec = config.segmentation
    with _Stage("segment", timings):
        if ds.kind == "events":
            if spec.mode is not Mode.EVENT_COUNT:
                raise ConfigError("event-log datasets need segmentation mode event-count")
            if config.features != "milan":
                raise ConfigError("event-log datasets use the 'milan' feature set")
            windows = segment_events(ds.events, spec, ds.classes, ds.source_id)
        else:
            if spec.mode is not Mode.SAMPLE_COUNT:
                raise ConfigError("sample-table datasets need segmentation mode sample-count")
            if config.features != "imu-stats":
                raise ConfigError("sample-table datasets use the 'imu-stats' feature set")
            windows = segment_samples(ds.samples, spec, ds.classes, names=ds.label_names)
        if not windows:
            raise DataFormatError("segmentation produced no windows")
    with _Stage("features", timings):
        if ds.kind == "events":
            layout = EventFeatureSchema.from_events(ds.events, ds.location_map)
            return Prepared(ds, windows, layout, None)
        matrix = np.array([r.channels for r in ds.samples], dtype=float)
        return Prepared(ds, windows, None, matrix)


def featurize(prep: Prepared, train_idx: Sequence[int]) -> np.ndarray:
    """Feature matrix for every window, fitting anything learned on ``train_idx`` only."""
    if prep.layout is None:
        return sample_features(prep.sample_matrix, prep.windows)
    events = prep.dataset.events
    train_spans = audit_mod.SpanIndex([prep.windows[i] for i in train_idx])
    runs = [events[a:b] for a, b in train_spans.intervals(prep.dataset.source_id)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mi = compute_mi_matrix(runs, sensors=sorted(prep.layout.sensor_kinds))
    return event_features(events, prep.windows, mi, prep.layout)


@dataclass
class EvalResult:
    tag: str
    spec: SplitSpec
    assignments: list[FoldAssignment]
    fold_of: np.ndarray  # eval fold per test instance, -1 when never tested
    truth: np.ndarray
    predicted: np.ndarray
    cm: ConfusionMatrix
    leakage: float
    near_duplicate: float
    violations: list[str]
    n_train: int
    n_test: int


def _resolve_split(spec: SplitSpec, seed: int) -> SplitSpec:
    return spec if spec.seed is not None else replace(spec, seed=seed)


def evaluate(prep: Prepared, spec: SplitSpec, params: ForestParams, seed: int, tag: str, timings: dict) -> EvalResult:
    windows = prep.windows
    with _Stage("split", timings):
        assignments = make_assignments(windows, spec)
        folds: list[tuple[list[int], list[int]]] = []
        for a in assignments:
            folds.extend(evaluation_folds(a, spec.test_fold))
    n = len(windows)
    classes = prep.dataset.classes
    fold_of = np.full(n, -1, dtype=np.int64)
    predicted = np.full(n, -1, dtype=np.int64)
    truth = np.array([w.label for w in windows], dtype=np.int64)
    leaked = 0
    near = 0
    n_tested = 0
    n_train_total = 0
    for f, (train, test) in enumerate(folds):
        if not test or not train:
            raise ConfigError(f"split {tag}: evaluation fold {f} has an empty train or test part")
        with _Stage("features", timings):
            X = featurize(prep, train)
        with _Stage("train", timings):
            model = train_forest(
                X[train], truth[train], params, seed, classes.names, prep.schema.fingerprint
            )
        with _Stage("predict", timings):
            labels, _ = predict(model, X[test], prep.schema.fingerprint)
        with _Stage("audit", timings):
            tr = [windows[i] for i in train]
            te = [windows[i] for i in test]
            leaked += round(audit_mod.leakage_fraction(tr, te) * len(te))
            near += round(audit_mod.near_duplicate_fraction(tr, te) * len(te))
        fold_of[test] = f
        predicted[test] = labels
        n_tested += len(test)
        n_train_total += len(train)
    tested = fold_of >= 0
    cm = confusion(truth[tested], predicted[tested], classes.names)
    violations = sorted({v for a in assignments for v in audit_mod.group_integrity(a, windows).violations})
    return EvalResult(
        tag, spec, assignments, fold_of, truth, predicted, cm,
        leaked / n_tested, near / n_tested, violations,
        n_train_total // len(folds), n_tested,
    )


def summarize(result: EvalResult) -> dict:
    cm = result.cm
    f1 = per_class_f1(cm)
    return {
        "scheme": result.spec.scheme.value,
        "split": _split_dict(result.spec),
        "assignment_file": f"assignment_{result.tag}.json",
        "predictions_file": f"predictions_{result.tag}.csv",
        "n_train": result.n_train,
        "n_test": result.n_test,
        "metrics": {
            "accuracy": r4(accuracy(cm)),
            "balanced_accuracy": r4(balanced_accuracy(cm)),
            "weighted_f1": r4(weighted_f1(cm)),
            "per_class_f1": {name: r4(v) for name, v in zip(cm.classes, f1)},
        },
        "confusion": cm.to_dict(),
        "audit": {
            "leakage_fraction": r4(result.leakage),
            "near_duplicate_fraction": r4(result.near_duplicate),
            "violations": result.violations,
        },
    }


def _split_dict(spec: SplitSpec) -> dict:
    d = asdict(spec)
    d["scheme"] = spec.scheme.value
    d["ratios"] = list(spec.ratios)
    d["assignments"] = dict(spec.assignments)
    return d


def _base_report(config: ExperimentConfig, prep: Prepared) -> dict:
    return {
        "report_version": REPORT_VERSION,
        "config_fingerprint": config.fingerprint(),
        "seed": config.seed,
        "n_windows": len(prep.windows),
        "classes": prep.dataset.classes.names,
        "feature_schema": list(prep.schema.names),
        "segmentation": {
            "mode": config.segmentation.mode.value,
            "size": config.segmentation.size,
            "step": config.segmentation.step,
            "label_rule": config.segmentation.label_rule.value,
            "group_rule": config.segmentation.group_rule.value,
        },
        "overlap_histogram": {str(k): v for k, v in audit_mod.overlap_histogram(prep.windows).items()},
    }


def _tags(specs: Sequence[SplitSpec]) -> list[str]:
    tags: list[str] = []
    for s in specs:
        t = s.scheme.value
        while t in tags:
            t += "-b"
        tags.append(t)
    return tags


def _out_dir(config: ExperimentConfig, out: str | Path | None) -> Path | None:
    target = out if out is not None else config.output_dir
    if target is None:
        return None
    p = Path(target)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_result(out: Path, result: EvalResult, prep: Prepared) -> None:
    (out / f"confusion_{result.tag}.csv").write_text(result.cm.to_csv())
    docs = [a.to_dict() for a in result.assignments]
    (out / f"assignment_{result.tag}.json").write_text(
        json.dumps(docs[0] if len(docs) == 1 else docs, indent=1)
    )
    names = prep.dataset.classes.names
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "fold", "group", "truth", "predicted"])
    for i in np.flatnonzero(result.fold_of >= 0):
        w.writerow([int(i), int(result.fold_of[i]), prep.windows[i].group_key, names[result.truth[i]], names[result.predicted[i]]])
    (out / f"predictions_{result.tag}.csv").write_text(buf.getvalue())


def _dump(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def run(config: ExperimentConfig, out: str | Path | None = None, split_index: int = 0) -> dict:
    """Run one split spec end to end and return the report document."""
    timings: dict[str, float] = {}
    prep = prepare(config, timings)
    spec = _resolve_split(config.splits[split_index], config.seed)
    tag = _tags([spec])[0]
    result = evaluate(prep, spec, config.classifier, config.seed, tag, timings)
    report = _base_report(config, prep)
    report.update(summarize(result))
    report["timings"] = {k: r4(v) for k, v in timings.items()}
    out_dir = _out_dir(config, out)
    if out_dir is not None:
        _write_result(out_dir, result, prep)
        _dump(out_dir / "report.json", report)
    return report


GAP_METRICS = ("accuracy", "balanced_accuracy", "weighted_f1")


def compare(config: ExperimentConfig, out: str | Path | None = None) -> dict:
    """Biased vs unbiased evaluation of the same pipeline, with the per-metric gap."""
    if len(config.splits) != 2:
        raise ConfigError(f"compare needs exactly two split specs, got {len(config.splits)}")
    timings: dict[str, float] = {}
    prep = prepare(config, timings)
    specs = [_resolve_split(s, config.seed) for s in config.splits]
    tags = _tags(specs)
    results = [evaluate(prep, s, config.classifier, config.seed, t, timings) for s, t in zip(specs, tags)]
    biased, unbiased = (summarize(r) for r in results)
    gap = {m: r4(biased["metrics"][m] - unbiased["metrics"][m]) for m in GAP_METRICS}
    gap["per_class_f1"] = {
        c: r4(biased["metrics"]["per_class_f1"][c] - unbiased["metrics"]["per_class_f1"][c])
        for c in biased["metrics"]["per_class_f1"]
    }
    report = _base_report(config, prep)
    report.update({
        "biased": biased,
        "unbiased": unbiased,
        "gap": gap,
        "leakage": {"biased": biased["audit"]["leakage_fraction"], "unbiased": unbiased["audit"]["leakage_fraction"]},
        "timings": {k: r4(v) for k, v in timings.items()},
    })
    out_dir = _out_dir(config, out)
    if out_dir is not None:
        for r in results:
            _write_result(out_dir, r, prep)
        _dump(out_dir / "report.json", report)
    return report


def audit(config: ExperimentConfig, out: str | Path | None = None, split_index: int = 0) -> dict:
    """Segmentation and splitting only: contamination measures, no training."""
    timings: dict[str, float] = {}
    prep = prepare(config, timings)
    spec = _resolve_split(config.splits[split_index], config.seed)
    windows = prep.windows
    with _Stage("split", timings):
        assignments = make_assignments(windows, spec)
    with _Stage("audit", timings):
        leaked = near = tested = 0
        for a in assignments:
            for train, test in evaluation_folds(a, spec.test_fold):
                tr = [windows[i] for i in train]
                te = [windows[i] for i in test]
                leaked += round(audit_mod.leakage_fraction(tr, te) * len(te))
                near += round(audit_mod.near_duplicate_fraction(tr, te) * len(te))
                tested += len(te)
        violations = sorted({v for a in assignments for v in audit_mod.group_integrity(a, windows).violations})
    doc = {
        "leakage_fraction": r4(leaked / tested),
        "near_duplicate_fraction": r4(near / tested),
        "violations": violations,
        "histogram": {str(k): v for k, v in audit_mod.overlap_histogram(windows).items()},
        "parameters": {
            "config_fingerprint": config.fingerprint(),
            "scheme": spec.scheme.value,
            "split": _split_dict(spec),
            "segmentation": _base_report(config, prep)["segmentation"],
            "n_windows": len(windows),
            "n_test": tested,
        },
    }
    out_dir = _out_dir(config, out)
    if out_dir is not None:
        tag = _tags([spec])[0]
        docs = [a.to_dict() for a in assignments]
        (out_dir / f"assignment_{tag}.json").write_text(json.dumps(docs[0] if len(docs) == 1 else docs, indent=1))
        _dump(out_dir / "audit.json", doc)
    return doc


def write_synth(cfg: AmbientSynthConfig | BodySynthConfig, out: str | Path) -> Path:
    """Write a synthetic dataset in the ingest formats plus its manifest; return the manifest path."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(cfg, AmbientSynthConfig):
        events = generate_ambient_stream(cfg)
        (out / "events.txt").write_text(serialize_event_log(events))
        (out / "locations.json").write_text(json.dumps(ambient_location_map(cfg), indent=1))
        manifest = {
            "schema": "casas",
            "files": [{"path": "events.txt"}],
            "activities": {n: n for n in activity_names(cfg.activities)},
            "location_map": "locations.json",
        }
    else:
        streams = generate_body_stream(cfg)
        files = []
        for sid, rows in streams.items():
            name = f"subject_{sid}.dat"
            (out / name).write_text(serialize_sample_table(rows))
            files.append({"path": name, "subject": sid})
        manifest = {
            "schema": "table",
            "table": {
                "channel_columns": list(range(1, cfg.channels + 1)),
                "label_column": 0,
                "sample_rate": cfg.sample_rate,
            },
            "files": files,
            "activities": {str(i + 1): n for i, n in enumerate(activity_names(cfg.activities))},
        }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path


def recompute_metrics(out_dir: str | Path, tag: str) -> dict:
    """Recompute a run's metrics from its persisted predictions and assignment files."""
    out_dir = Path(out_dir)
    assignment = json.loads((out_dir / f"assignment_{tag}.json").read_text())
    docs = assignment if isinstance(assignment, list) else [assignment]
    covered = set()
    for d in docs:
        FoldAssignment.from_dict(d)  # validates disjointness/coverage
        for name, idx in d["partitions"].items():
            if name not in ("train", "validation"):
                covered.update(idx)
    with open(out_dir / f"predictions_{tag}.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not {int(r["index"]) for r in rows} <= covered:
        raise InvariantError("predictions reference instances outside the held-out partitions")
    report = json.loads((out_dir / "report.json").read_text())
    classes = report["classes"]
    cid = {c: i for i, c in enumerate(classes)}
    cm = confusion([cid[r["truth"]] for r in rows], [cid[r["predicted"]] for r in rows], classes)
    return {
        "accuracy": r4(accuracy(cm)),
        "balanced_accuracy": r4(balanced_accuracy(cm)),
        "weighted_f1": r4(weighted_f1(cm)),
        "per_class_f1": {c: r4(v) for c, v in zip(classes, per_class_f1(cm))},
    }
