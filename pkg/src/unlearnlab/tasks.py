"""
Scenario classification of (data, model, target) label levels and
construction of validated dataset partitions for one unlearning request.
"""

import enum
import json
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from unlearnlab import utils
from unlearnlab.errors import ContainmentError, DomainError, FormatError, ScenarioError
from unlearnlab.taxonomy import Dataset, DomainLevel, LabelTaxonomy

logger = logging.getLogger(__name__)

TASK_FORMAT = "unlearnlab-task"
TASK_VERSION = 1

_SUB, _CLS, _SUP = DomainLevel.SUBSET, DomainLevel.CLASS, DomainLevel.SUPERCLASS

# (data, model, target) in the row order of the three-layer scenario table
THREE_LAYER_ROWS = (
    (_SUB, _SUB, _SUB),
    (_SUB, _SUB, _CLS),
    (_SUB, _CLS, _SUB),
    (_SUB, _CLS, _CLS),
    (_SUB, _SUB, _SUP),
    (_SUB, _SUP, _SUB),
    (_SUB, _SUP, _SUP),
    (_SUB, _CLS, _SUP),
    (_SUB, _SUP, _CLS),
    (_CLS, _CLS, _CLS),
    (_CLS, _CLS, _SUP),
    (_CLS, _SUP, _CLS),
    (_CLS, _SUP, _SUP),
    (_CLS, _SUB, _SUB),
    (_CLS, _SUB, _CLS),
    (_CLS, _SUB, _SUP),
    (_CLS, _CLS, _SUB),
    (_CLS, _SUP, _SUB),
    (_SUP, _SUP, _SUP),
    (_SUP, _CLS, _CLS),
    (_SUP, _CLS, _SUP),
    (_SUP, _SUP, _CLS),
    (_SUP, _SUB, _SUB),
    (_SUP, _SUB, _CLS),
    (_SUP, _SUB, _SUP),
    (_SUP, _CLS, _SUB),
    (_SUP, _SUP, _SUB),
)


class ScenarioKind(enum.Enum):
    ALL_MATCHED = "all-matched"
    TARGET_MISMATCH = "target-mismatch"
    MODEL_MISMATCH = "model-mismatch"
    DATA_MISMATCH = "data-mismatch"
    SIMILAR_TO_ALL_MATCHED = "similar-to-all-matched"
    EXTENDED_DIFFERENT = "extended-different"
    IMPRACTICAL = "impractical"


@dataclass(frozen=True)
class Scenario:
    """
    A scenario kind; `row` carries the three-layer table number for
    extended-different scenarios and is None otherwise.
    """

    kind: ScenarioKind
    row: int | None = None

    def __str__(self) -> str:
        if self.row is None:
            return self.kind.value
        return f"{self.kind.value}-{self.row}"

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        head, sep, tail = text.rpartition("-")
        if sep and tail.isdigit():
            return cls(ScenarioKind(head), int(tail))
        return cls(ScenarioKind(text))


@dataclass(frozen=True)
class ScenarioSpec:
    data_level: DomainLevel
    model_level: DomainLevel
    target_level: DomainLevel

    def __post_init__(self):
        for name in ("data_level", "model_level", "target_level"):
            object.__setattr__(self, name, DomainLevel.parse(getattr(self, name)))

    def levels(self) -> tuple[DomainLevel, DomainLevel, DomainLevel]:
        return self.data_level, self.model_level, self.target_level

    def __str__(self) -> str:
        return "/".join(level.label for level in self.levels())


def scenario_row(spec: ScenarioSpec) -> int:
    """
    row number (1-27) of `spec` in the three-layer scenario table.
    """
    return THREE_LAYER_ROWS.index(spec.levels()) + 1


def two_layer_row(spec: ScenarioSpec) -> int:
    """
    row number (1-8) of `spec` in the two-layer (class/superclass) table.
    """
    if _SUB in spec.levels():
        raise DomainError("the two-layer table has no subset level")
    d, m, t = (int(level == _SUP) for level in spec.levels())
    return 1 + 4 * d + 2 * m + t


def classify_scenario(spec: ScenarioSpec) -> Scenario:
    d, m, t = spec.levels()
    if d > t:
        return Scenario(ScenarioKind.IMPRACTICAL)
    if d == m == t:
        return Scenario(ScenarioKind.ALL_MATCHED)
    if d == t:
        if m < d:
            return Scenario(ScenarioKind.SIMILAR_TO_ALL_MATCHED)
        if m - d == 1:
            return Scenario(ScenarioKind.MODEL_MISMATCH)
    elif t - d == 1:
        if m == d:
            return Scenario(ScenarioKind.TARGET_MISMATCH)
        if m == t:
            return Scenario(ScenarioKind.DATA_MISMATCH)
    return Scenario(ScenarioKind.EXTENDED_DIFFERENT, scenario_row(spec))


def _index_array(values) -> np.ndarray:
    out = np.unique(np.asarray(values, dtype=np.int64).reshape(-1))
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class EngineView:
    """
    What an unlearning engine may know about a task.
    """

    spec: ScenarioSpec
    forgetting_labels: tuple[int, ...]
    f_idx: np.ndarray
    un_idx: np.ndarray
    declared_unidentified_count: int
    size: int

    @property
    def model_level(self) -> DomainLevel:
        return self.spec.model_level


@dataclass(frozen=True, eq=False)
class UnlearnTask:
    scenario: Scenario
    spec: ScenarioSpec
    forgetting_labels: tuple[int, ...]
    target_labels: tuple[int, ...]
    declared_unidentified_count: int
    f_idx: np.ndarray
    t_idx: np.ndarray
    uf_idx: np.ndarray
    r_idx: np.ndarray
    un_idx: np.ndarray
    size: int

    def __post_init__(self):
        for name in ("f_idx", "t_idx", "uf_idx", "r_idx", "un_idx"):
            object.__setattr__(self, name, _index_array(getattr(self, name)))

    @property
    def model_level(self) -> DomainLevel:
        return self.spec.model_level

    @property
    def descriptor(self) -> str:
        return f"{self.scenario}:{self.spec}"

    def engine_view(self) -> EngineView:
        return EngineView(
            spec=self.spec,
            forgetting_labels=self.forgetting_labels,
            f_idx=self.f_idx,
            un_idx=self.un_idx,
            declared_unidentified_count=self.declared_unidentified_count,
            size=self.size,
        )


def build_task(
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    spec: ScenarioSpec,
    forgetting_labels,
    target_labels=None,
) -> UnlearnTask:
    """
    build the index partitions of an unlearning request.

    Parameters
    ----------
    dataset : Dataset
        the training set
    taxonomy : LabelTaxonomy
        label structure of `dataset`
    spec : ScenarioSpec
        (data, model, target) levels
    forgetting_labels : list[int | str]
        labels at the data level whose samples are reported for removal
    target_labels : list[int | str], optional
        labels at the target level forming the target concept; defaults to
        the forgetting labels when data and target levels match

    Returns
    -------
    UnlearnTask
    """
    scenario = classify_scenario(spec)
    if scenario.kind == ScenarioKind.IMPRACTICAL:
        raise ScenarioError(
            f"{spec} is impractical: data level is coarser than target level"
        )
    forget = sorted({taxonomy.label_id(x, spec.data_level) for x in forgetting_labels})
    if not forget:
        raise DomainError("forgetting selection is empty")
    if target_labels is None:
        if spec.data_level != spec.target_level:
            raise ContainmentError("target labels are required when levels differ")
        target_labels = forget
    target = sorted({taxonomy.label_id(x, spec.target_level) for x in target_labels})
    if not target:
        raise DomainError("target concept is empty")

    lifted = taxonomy.lift(forget, spec.data_level, spec.target_level)
    outside = [f for f, up in zip(forget, lifted) if int(up) not in target]
    if outside:
        names = [taxonomy.names(spec.data_level)[i] for i in outside]
        raise ContainmentError(f"forgetting labels {names} are outside the target concept")
    if spec.data_level == spec.target_level and forget != target:
        raise ContainmentError(
            "equal data and target levels need target labels equal to the forgetting labels"
        )

    inside = set()
    for label in target:
        inside.update(taxonomy.children(label, spec.target_level, spec.data_level))
    declared = len(inside - set(forget))

    everything = np.arange(len(dataset))
    f_mask = np.isin(dataset.labels(spec.data_level), forget)
    t_mask = np.isin(dataset.labels(spec.target_level), target)
    task = UnlearnTask(
        scenario=scenario,
        spec=spec,
        forgetting_labels=tuple(forget),
        target_labels=tuple(target),
        declared_unidentified_count=declared,
        f_idx=everything[f_mask],
        t_idx=everything[t_mask],
        uf_idx=everything[t_mask & ~f_mask],
        r_idx=everything[~t_mask],
        un_idx=everything[~f_mask],
        size=len(dataset),
    )
    logger.info(
        "built %s task: |f|=%d |uf|=%d |r|=%d, %d unidentified labels",
        scenario,
        len(task.f_idx),
        len(task.uf_idx),
        len(task.r_idx),
        declared,
    )
    return task


class PartitionViolation(NamedTuple):
    identity: str
    detail: str

    def __str__(self) -> str:
        return f"{self.identity} violated: {self.detail}"


def validate_partition(task: UnlearnTask, dataset: Dataset) -> PartitionViolation | None:
    """
    check the partition identities of `task`; returns the first violation,
    or None when every identity holds.
    """
    n = len(dataset)
    everything = np.arange(n)
    f, t, uf, r, un = task.f_idx, task.t_idx, task.uf_idx, task.r_idx, task.un_idx
    if task.size != n:
        return PartitionViolation("|D|", f"task built for {task.size} samples, dataset has {n}")
    for name, idx in (("f", f), ("t", t), ("uf", uf), ("r", r), ("un", un)):
        if len(idx) and (idx[0] < 0 or idx[-1] >= n):
            return PartitionViolation(f"{name} ⊆ D", "index out of range")
    checks = (
        ("f ⊆ t", len(np.setdiff1d(f, t)) == 0),
        ("r ∪ uf = un", np.array_equal(np.union1d(r, uf), un)),
        ("r ∩ uf = ∅", len(np.intersect1d(r, uf)) == 0),
        ("uf = t \\ f", np.array_equal(uf, np.setdiff1d(t, f))),
        ("un = D \\ f", np.array_equal(un, np.setdiff1d(everything, f))),
        ("r = D \\ t", np.array_equal(r, np.setdiff1d(everything, t))),
    )
    for identity, ok in checks:
        if not ok:
            return PartitionViolation(identity, f"{task.descriptor}")
    return None


def task_to_dict(task: UnlearnTask) -> dict:
    return {
        "format": TASK_FORMAT,
        "version": TASK_VERSION,
        "scenario": str(task.scenario),
        "levels": [level.label for level in task.spec.levels()],
        "forgetting_labels": list(task.forgetting_labels),
        "target_labels": list(task.target_labels),
        "declared_unidentified_count": task.declared_unidentified_count,
        "size": task.size,
        "f_idx": task.f_idx.tolist(),
        "t_idx": task.t_idx.tolist(),
        "uf_idx": task.uf_idx.tolist(),
        "r_idx": task.r_idx.tolist(),
        "un_idx": task.un_idx.tolist(),
    }


def task_from_dict(doc: dict) -> UnlearnTask:
    if not isinstance(doc, dict) or doc.get("format") != TASK_FORMAT:
        raise FormatError("not an unlearnlab task document")
    if doc.get("version") != TASK_VERSION:
        raise FormatError(f"task version {doc.get('version')!r} is not supported")
    try:
        spec = ScenarioSpec(*doc["levels"])
        return UnlearnTask(
            scenario=Scenario.parse(doc["scenario"]),
            spec=spec,
            forgetting_labels=tuple(int(x) for x in doc["forgetting_labels"]),
            target_labels=tuple(int(x) for x in doc["target_labels"]),
            declared_unidentified_count=int(doc["declared_unidentified_count"]),
            f_idx=doc["f_idx"],
            t_idx=doc["t_idx"],
            uf_idx=doc["uf_idx"],
            r_idx=doc["r_idx"],
            un_idx=doc["un_idx"],
            size=int(doc["size"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"invalid task document: {e}") from e


def write_task(filename: str, task: UnlearnTask):
    utils.write_file(filename, json.dumps(task_to_dict(task), indent=1))


def read_task(filename: str) -> UnlearnTask:
    try:
        doc = json.loads(utils.read_file(filename))
    except json.JSONDecodeError as e:
        raise FormatError(f"{filename}: {e}") from e
    return task_from_dict(doc)
