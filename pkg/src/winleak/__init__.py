"""Leakage-aware evaluation of windowed activity recognition pipelines."""

__version__ = "0.1.0"

from .audit import group_integrity, leakage_fraction, near_duplicate_fraction, overlap_histogram
from .core import (
    ClassTable,
    ConfigError,
    DataFormatError,
    FoldAssignment,
    InvariantError,
    LabeledInstance,
    SampleRow,
    Scheme,
    SensorEvent,
    SensorKind,
    Window,
    WinleakError,
    raw_overlap,
)
from .forest import ForestModel, ForestParams, knn_predict, predict, predict_proba, train_forest
from .metrics import ConfusionMatrix, accuracy, balanced_accuracy, confusion, per_class_f1, weighted_f1
from .segment import SegmentationSpec, segment_events, segment_samples, window_count
from .split import (
    SplitSpec,
    explicit_holdout,
    group_kfold,
    loso_split,
    make_assignments,
    random_shuffle_split,
    stratified_group_kfold,
    stratified_kfold,
)
from .synth import AmbientSynthConfig, BodySynthConfig, generate_ambient_stream, generate_body_stream

__all__ = [
    "AmbientSynthConfig",
    "BodySynthConfig",
    "ClassTable",
    "ConfigError",
    "ConfusionMatrix",
    "DataFormatError",
    "FoldAssignment",
    "ForestModel",
    "ForestParams",
    "InvariantError",
    "LabeledInstance",
    "SampleRow",
    "Scheme",
    "SegmentationSpec",
    "SensorEvent",
    "SensorKind",
    "SplitSpec",
    "Window",
    "WinleakError",
    "accuracy",
    "balanced_accuracy",
    "confusion",
    "explicit_holdout",
    "generate_ambient_stream",
    "generate_body_stream",
    "group_integrity",
    "group_kfold",
    "knn_predict",
    "leakage_fraction",
    "loso_split",
    "make_assignments",
    "near_duplicate_fraction",
    "overlap_histogram",
    "per_class_f1",
    "predict",
    "predict_proba",
    "random_shuffle_split",
    "raw_overlap",
    "segment_events",
    "segment_samples",
    "stratified_group_kfold",
    "stratified_kfold",
    "train_forest",
    "weighted_f1",
    "window_count",
]
