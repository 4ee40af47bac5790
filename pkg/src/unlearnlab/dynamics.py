"""
Forgetting-dynamics traces and representation-geometry probes.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from unlearnlab import utils
from unlearnlab.diffnet import (
    ClassifierParams,
    group_accuracy,
    label_confidences,
    penultimate_features,
    predict,
    sample_losses,
)
from unlearnlab.errors import DataError, RangeError, ShapeError
from unlearnlab.taxonomy import Dataset, DomainLevel, LabelTaxonomy

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["epoch", "group", "loss", "accuracy"]


@dataclass(frozen=True, eq=False)
class Snapshot:
    epoch: int
    loss: dict[str, float]
    accuracy: dict[str, float]
    class_accuracy: np.ndarray


@dataclass(eq=False)
class DynamicsTrace:
    """
    Per-epoch group loss/accuracy and per-class accuracy.

    Groups are fixed when the trace is created; per-class accuracy is grouped
    by the data-level label and scored against the model-level label.
    """

    groups: dict[str, np.ndarray]
    data_level: DomainLevel
    model_level: DomainLevel
    n_units: int
    snapshots: list[Snapshot] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def epochs(self) -> list[int]:
        return [s.epoch for s in self.snapshots]

    def at(self, epoch: int) -> Snapshot:
        for snapshot in self.snapshots:
            if snapshot.epoch == epoch:
                return snapshot
        raise RangeError(f"epoch {epoch} was not recorded")


def new_trace(task, taxonomy: LabelTaxonomy) -> DynamicsTrace:
    """
    create an empty trace for `task`: groups f, uf, r for a full task, or
    whatever index sets a restricted view carries.
    """
    groups = {}
    for name in ("f", "uf", "r", "un"):
        idx = getattr(task, f"{name}_idx", None)
        if idx is not None and not (name == "un" and "r" in groups):
            groups[name] = np.asarray(idx, dtype=np.int64)
    return DynamicsTrace(
        groups=groups,
        data_level=task.spec.data_level,
        model_level=task.spec.model_level,
        n_units=taxonomy.size(task.spec.data_level),
    )


def unit_accuracies(
    params: ClassifierParams,
    dataset: Dataset,
    indices,
    unit_level: DomainLevel,
    model_level: DomainLevel,
    n_units: int,
    expected: bool = False,
) -> np.ndarray:
    """
    accuracy in percent per `unit_level` label over `indices`, a sample being
    correct when its argmax equals its `model_level` label. With `expected`
    a sample counts the softmax probability of its label instead. Units
    without samples are NaN.
    """
    idx = np.asarray(indices, dtype=np.int64)
    out = np.full(n_units, np.nan)
    if len(idx) == 0:
        return out
    units = dataset.labels(unit_level)[idx]
    x, y = dataset.features[idx], dataset.labels(model_level)[idx]
    correct = label_confidences(params, x, y) if expected else predict(params, x) == y
    counts = np.bincount(units, minlength=n_units)
    hits = np.bincount(units, weights=correct.astype(np.float64), minlength=n_units)
    present = counts > 0
    out[present] = 100.0 * hits[present] / counts[present]
    return out


def record_epoch(
    trace: DynamicsTrace,
    params: ClassifierParams,
    dataset: Dataset,
    task=None,
    taxonomy: LabelTaxonomy | None = None,
    epoch: int | None = None,
) -> DynamicsTrace:
    """
    append one snapshot of `params` to `trace`.
    """
    if task is not None and not np.array_equal(trace.groups["f"], task.f_idx):
        raise DataError("trace groups do not belong to this task")
    if taxonomy is not None and taxonomy.size(trace.data_level) != trace.n_units:
        raise DataError("trace was created for another taxonomy")
    if epoch is None:
        epoch = trace.snapshots[-1].epoch + 1 if trace.snapshots else 0
    elif trace.snapshots and epoch <= trace.snapshots[-1].epoch:
        raise RangeError(f"epoch {epoch} recorded out of order")

    labels = dataset.labels(trace.model_level)
    loss, accuracy = {}, {}
    for name, idx in trace.groups.items():
        if len(idx) == 0:
            loss[name] = float("nan")
            accuracy[name] = 0.0
            continue
        loss[name] = float(sample_losses(params, dataset.features[idx], labels[idx]).mean())
        accuracy[name] = group_accuracy(params, dataset, idx, trace.model_level).percent
    class_accuracy = unit_accuracies(
        params,
        dataset,
        np.arange(len(dataset)),
        trace.data_level,
        trace.model_level,
        trace.n_units,
    )
    class_accuracy.setflags(write=False)
    trace.snapshots.append(Snapshot(epoch, loss, accuracy, class_accuracy))
    logger.debug(
        "epoch %d: %s",
        epoch,
        " ".join(f"{k}={loss[k]:.4f}/{accuracy[k]:.1f}%" for k in loss),
    )
    return trace


def class_accuracy_drop(trace: DynamicsTrace, t_ref: int, t_now: int) -> np.ndarray:
    """
    per-class accuracy(t_ref) - accuracy(t_now) in percentage points.
    """
    return trace.at(t_ref).class_accuracy - trace.at(t_now).class_accuracy


def select_target_classes(drops, count: int) -> set[int]:
    """
    the `count` classes with the largest drops, ties to the lower id.
    NaN entries are never selected.
    """
    values = np.asarray(drops, dtype=np.float64).reshape(-1)
    eligible = [i for i in range(len(values)) if not np.isnan(values[i])]
    if count < 0 or count > len(eligible):
        raise RangeError(f"cannot select {count} of {len(eligible)} classes")
    ranked = sorted(eligible, key=lambda i: (-values[i], i))
    return set(ranked[:count])


@dataclass(frozen=True, eq=False)
class FeatureStats:
    center: np.ndarray
    distances: np.ndarray
    tag: str = ""

    @property
    def mean_distance(self) -> float:
        return float(self.distances.mean())


def feature_center(params: ClassifierParams, samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise DataError("feature center of an empty sample set")
    return penultimate_features(params, x).mean(axis=0)


def feature_distances(params: ClassifierParams, samples, center) -> np.ndarray:
    features = penultimate_features(params, samples)
    center = np.asarray(center, dtype=np.float64)
    if center.shape != (features.shape[1],):
        raise ShapeError(
            f"center width {center.shape} does not match feature width {features.shape[1]}"
        )
    return np.linalg.norm(features - center, axis=1)


def feature_stats(params: ClassifierParams, samples, tag: str = "", center=None) -> FeatureStats:
    if center is None:
        center = feature_center(params, samples)
    return FeatureStats(center, feature_distances(params, samples, center), tag)


@dataclass(frozen=True, eq=False)
class GravityProbe:
    """
    Mean |loss change| between two models, for the forgetting set and per
    label of the grouping level, next to the mean feature distance of each
    label to the forgetting center (measured on the first model).
    """

    forget_change: float
    forget_radius: float
    label_change: np.ndarray
    label_distance: np.ndarray

    def far_labels(self) -> list[int]:
        """
        labels whose mean distance lies beyond the forgetting set's radius.
        """
        return [
            int(i)
            for i in np.flatnonzero(self.label_distance > self.forget_radius)
            if not np.isnan(self.label_change[i])
        ]

    def mean_change(self, labels) -> float:
        labels = list(labels)
        if not labels:
            raise DataError("mean change of an empty label set")
        return float(np.mean(self.label_change[labels]))


def gravity_probe(
    before: ClassifierParams,
    after: ClassifierParams,
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    forget_idx,
    model_level: DomainLevel,
    group_level: DomainLevel = DomainLevel.CLASS,
) -> GravityProbe:
    """
    measure how strongly a forgetting update moved every label group.

    Parameters
    ----------
    before, after : ClassifierParams
        the model before and after the update
    forget_idx : array
        indices of the forgetting set
    model_level : DomainLevel
        level the losses are computed at
    group_level : DomainLevel
        level the remaining samples are grouped by
    """
    forget = np.asarray(forget_idx, dtype=np.int64)
    if len(forget) == 0:
        raise DataError("gravity probe needs a forgetting set")
    labels = dataset.labels(model_level)
    change = np.abs(
        sample_losses(after, dataset.features, labels)
        - sample_losses(before, dataset.features, labels)
    )
    stats = feature_stats(before, dataset.features[forget], "forget")
    distance = feature_distances(before, dataset.features, stats.center)

    n = taxonomy.size(group_level)
    groups = dataset.labels(group_level).copy()
    rest = np.ones(len(dataset), dtype=bool)
    rest[forget] = False
    counts = np.bincount(groups[rest], minlength=n)
    present = counts > 0
    label_change = np.full(n, np.nan)
    label_distance = np.full(n, np.nan)
    label_change[present] = (
        np.bincount(groups[rest], weights=change[rest], minlength=n)[present] / counts[present]
    )
    label_distance[present] = (
        np.bincount(groups[rest], weights=distance[rest], minlength=n)[present] / counts[present]
    )
    return GravityProbe(
        forget_change=float(change[forget].mean()),
        forget_radius=float(stats.distances.max()),
        label_change=label_change,
        label_distance=label_distance,
    )


def trace_frame(trace: DynamicsTrace) -> pd.DataFrame:
    rows = [
        (s.epoch, name, s.loss[name], s.accuracy[name])
        for s in trace.snapshots
        for name in trace.groups
    ]
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def write_trace_csv(filename: str, trace: DynamicsTrace):
    utils.write_file(filename, trace_frame(trace).to_csv(index=False))
    logger.info("wrote trace %s", filename)


def write_class_drop_csv(filename: str, drops, names: tuple[str, ...] | None = None):
    drops = np.asarray(drops, dtype=np.float64)
    frame = pd.DataFrame({"class": np.arange(len(drops)), "drop": drops})
    if names is not None:
        frame.insert(1, "name", list(names))
    utils.write_file(filename, frame.to_csv(index=False))
