"""
Evaluation suite: UA, RA, TA, a confidence-threshold membership attacker,
the Gap aggregate and report tables.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.metrics import roc_curve

from unlearnlab import utils
from unlearnlab.diffnet import (
    ClassifierParams,
    confidences,
    group_accuracy,
    label_confidences,
)
from unlearnlab.errors import ComparisonError, DataError, FormatError, RangeError
from unlearnlab.taxonomy import Dataset, LabelTaxonomy
from unlearnlab.tasks import UnlearnTask

logger = logging.getLogger(__name__)

RETRAINED = "retrained"
METRICS = ["UA", "RA", "TA", "MIA"]
REPORT_COLUMNS = [
    "method",
    "scenario",
    "task",
    "seed",
    "UA",
    "RA",
    "TA",
    "TA_all",
    "MIA",
    "Gap",
    "RTE",
]


@dataclass(frozen=True)
class MetricsReport:
    method: str
    task: str
    ua: float
    ra: float
    ta: float
    mia: float
    rte_seconds: float = 0.0
    ta_all: float | None = None
    seed: int | None = None
    gap: float | None = None

    def __post_init__(self):
        for name in ("ua", "ra", "ta", "mia"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise RangeError(f"{name} = {value} outside [0, 100]")
        if self.rte_seconds < 0:
            raise RangeError("runtime is negative")

    @property
    def scenario(self) -> str:
        return self.task.split(":", 1)[0]

    def values(self) -> tuple[float, float, float, float]:
        return self.ua, self.ra, self.ta, self.mia

    def row(self) -> dict:
        return {
            "method": self.method,
            "scenario": self.scenario,
            "task": self.task,
            "seed": self.seed,
            "UA": self.ua,
            "RA": self.ra,
            "TA": self.ta,
            "TA_all": self.ta_all,
            "MIA": self.mia,
            "Gap": self.gap,
            "RTE": self.rte_seconds,
        }


@dataclass(frozen=True)
class MiaAttacker:
    """
    Predicts "member" when a sample's confidence is >= threshold. The
    confidence is the probability the model gives the sample's own label
    when labels are known, the max softmax probability otherwise.
    """

    threshold: float
    fit_balanced_accuracy: float


def fit_mia_attacker(member_confidences, nonmember_confidences) -> MiaAttacker:
    """
    choose the threshold with the best balanced accuracy.

    Candidates are the midpoints between adjacent distinct confidences (the
    single common value when all are equal); ties go to the lowest candidate.
    """
    members = np.asarray(member_confidences, dtype=np.float64).reshape(-1)
    nonmembers = np.asarray(nonmember_confidences, dtype=np.float64).reshape(-1)
    if len(members) == 0 or len(nonmembers) == 0:
        raise DataError("membership attacker needs members and non-members")
    scores = np.concatenate([members, nonmembers])
    truth = np.concatenate([np.ones(len(members)), np.zeros(len(nonmembers))])
    if np.all(scores == scores[0]):
        return MiaAttacker(float(scores[0]), 0.5)
    # thresholds: +inf, then every distinct score descending
    fpr, tpr, thresholds = roc_curve(truth, scores, drop_intermediate=False)
    balanced = 0.5 * (tpr + 1.0 - fpr)
    # predicting on conf >= d is the same as on conf >= midpoint(d_prev, d)
    inner = np.arange(1, len(thresholds) - 1)
    candidates = (thresholds[inner] + thresholds[inner + 1]) / 2
    ranked = balanced[inner]
    best = int(np.flatnonzero(ranked == ranked.max())[-1])
    attacker = MiaAttacker(float(candidates[best]), float(ranked[best]))
    logger.debug(
        "mia attacker: threshold %.6f, balanced accuracy %.4f",
        attacker.threshold,
        attacker.fit_balanced_accuracy,
    )
    return attacker


def attack_confidences(params: ClassifierParams, inputs, labels=None) -> np.ndarray:
    """
    confidences the attacker looks at; see `MiaAttacker`.
    """
    if labels is None:
        return confidences(params, inputs)
    return label_confidences(params, inputs, labels)


def mia_score(
    attacker: MiaAttacker, params: ClassifierParams, target_samples, target_labels=None
) -> float:
    """
    percentage of targets the attacker labels as non-members.
    """
    x = np.asarray(target_samples, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise DataError("membership score of an empty target set")
    conf = attack_confidences(params, x, target_labels)
    return 100.0 * float(np.mean(conf < attacker.threshold))


def non_target_mask(test_split: Dataset, task: UnlearnTask) -> np.ndarray:
    """
    test samples outside the target concept.
    """
    return ~np.isin(test_split.labels(task.spec.target_level), task.target_labels)


def compute_metrics(
    params: ClassifierParams,
    task: UnlearnTask,
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    test_split: Dataset,
    rte: float = 0.0,
    method: str = "",
    seed: int | None = None,
) -> MetricsReport:
    """
    evaluate `params` on an unlearning task.

    Parameters
    ----------
    params : ClassifierParams
        model at the task's model level
    task : UnlearnTask
        full task, evaluator side
    dataset : Dataset
        training set the task was built on
    taxonomy : LabelTaxonomy
        label structure of both splits
    test_split : Dataset
        held-out samples, disjoint from `dataset`
    rte : float
        runtime of the engine in seconds

    Returns
    -------
    MetricsReport
        TA excludes test samples of the target concept; TA_all does not.
    """
    if len(task.r_idx) == 0:
        raise DataError("retaining set is empty")
    if params.arch.output_dim != taxonomy.size(task.model_level):
        raise DataError("model output size does not match the task's model level")
    level = task.model_level
    keep = np.flatnonzero(non_target_mask(test_split, task))
    if len(keep) == 0:
        raise DataError("no test samples outside the target concept")

    ua = group_accuracy(params, dataset, task.t_idx, level).percent
    ra = group_accuracy(params, dataset, task.r_idx, level).percent
    ta = group_accuracy(params, test_split, keep, level).percent
    ta_all = group_accuracy(params, test_split, np.arange(len(test_split)), level).percent

    train_labels = dataset.labels(level)
    attacker = fit_mia_attacker(
        attack_confidences(params, dataset.features[task.r_idx], train_labels[task.r_idx]),
        attack_confidences(params, test_split.features[keep], test_split.labels(level)[keep]),
    )
    mia = mia_score(
        attacker, params, dataset.features[task.t_idx], train_labels[task.t_idx]
    )
    return MetricsReport(
        method=method or params.tag,
        task=task.descriptor,
        ua=ua,
        ra=ra,
        ta=ta,
        mia=mia,
        rte_seconds=rte,
        ta_all=ta_all,
        seed=seed,
    )


def gap_of(values, retrained_values) -> float:
    """
    mean absolute difference of (UA, RA, TA, MIA) tuples.
    """
    a = np.asarray(values, dtype=np.float64)
    b = np.asarray(retrained_values, dtype=np.float64)
    if a.shape != (4,) or b.shape != (4,):
        raise ComparisonError("gap compares exactly four metrics")
    return float(np.abs(a - b).sum() / 4)


def compute_gap(report: MetricsReport, retrained_report: MetricsReport) -> float:
    if report.task != retrained_report.task:
        raise ComparisonError(
            f"cannot compare {report.task!r} against {retrained_report.task!r}"
        )
    return gap_of(report.values(), retrained_report.values())


def reports_frame(reports: list[MetricsReport]) -> pd.DataFrame:
    return pd.DataFrame([r.row() for r in reports], columns=REPORT_COLUMNS)


def fill_gaps(frame: pd.DataFrame) -> pd.DataFrame:
    """
    fill the Gap column of every row from the retrained row of the same task
    and seed; rows without a reference keep an empty Gap.
    """
    frame = frame.copy()
    ref = frame[frame["method"] == RETRAINED].set_index(["task", "seed"])
    if ref.index.has_duplicates:
        raise ComparisonError("more than one retrained reference for a task and seed")
    gaps = []
    for _, row in frame.iterrows():
        key = (row["task"], row["seed"])
        if key not in ref.index:
            gaps.append(np.nan)
            continue
        gaps.append(gap_of(row[METRICS].to_numpy(), ref.loc[key, METRICS].to_numpy()))
    frame["Gap"] = gaps
    return frame


def write_reports_csv(filename: str, frame: pd.DataFrame):
    utils.write_file(filename, frame[REPORT_COLUMNS].to_csv(index=False))
    logger.info("wrote %d report rows to %s", len(frame), filename)


def read_reports_csv(filename: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(filename)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FormatError(f"{filename}: {e}") from e
    missing = [c for c in REPORT_COLUMNS if c not in frame.columns]
    if missing:
        raise FormatError(f"{filename}: missing report columns {missing}")
    return frame[REPORT_COLUMNS]


def write_reports_json(filename: str, frame: pd.DataFrame):
    rows = json.loads(frame[REPORT_COLUMNS].to_json(orient="records"))
    utils.write_file(filename, json.dumps(rows, indent=1))


def report_from_row(row: dict) -> MetricsReport:
    def optional(value):
        return None if value is None or pd.isna(value) else value

    return MetricsReport(
        method=row["method"],
        task=row["task"],
        ua=float(row["UA"]),
        ra=float(row["RA"]),
        ta=float(row["TA"]),
        mia=float(row["MIA"]),
        rte_seconds=float(row["RTE"]),
        ta_all=optional(row.get("TA_all")),
        seed=None if optional(row.get("seed")) is None else int(row["seed"]),
        gap=optional(row.get("Gap")),
    )


def aggregate_reports(frame: pd.DataFrame) -> pd.DataFrame:
    """
    mean and std over seeds per (scenario, method), one `<metric>_mean` and
    `<metric>_std` column per metric. A single run has std 0.
    """
    if frame.empty:
        raise DataError("nothing to aggregate")
    metrics = METRICS + ["Gap", "RTE"]
    grouped = frame.groupby(["scenario", "method"], sort=True)[metrics]
    mean = grouped.mean().add_suffix("_mean")
    std = grouped.std().fillna(0.0).add_suffix("_std")
    out = pd.concat([mean, std], axis=1)
    order = [f"{m}_{s}" for m in metrics for s in ("mean", "std")]
    out = out[order].reset_index()
    out.insert(2, "runs", grouped.size().to_numpy())
    return out
