"""
Shared engine plumbing: configuration, outcome, run bookkeeping, batching by
role, pretraining and the retrain-from-scratch reference.
"""

import enum
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from unlearnlab.diffnet import (
    Architecture,
    ClassifierParams,
    Direction,
    GradientSet,
    TrainConfig,
    apply_step,
    clip_grad_norm,
    epoch_batches,
    group_accuracy,
    init_classifier,
    loss_grad,
    weighted_loss_grad,
)
from unlearnlab.dynamics import DynamicsTrace, new_trace, record_epoch
from unlearnlab.errors import ConfigError, DataError, NumericError
from unlearnlab.schedules import AnnealSchedule, TauMask, TauPolicy
from unlearnlab.taxonomy import Dataset, DomainLevel, LabelTaxonomy
from unlearnlab.tasks import EngineView, UnlearnTask
from unlearnlab.utils import Stopwatch

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN_DIMS = (64, 32)


class UfMode(enum.Enum):
    ASCEND = "ascend"
    CLEAN = "clean"


@dataclass(frozen=True)
class EngineConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    sched: AnnealSchedule | None = None
    tau_policy: TauPolicy = field(default_factory=TauPolicy)
    uf_mode: UfMode = UfMode.CLEAN
    rl_seed: int = 0
    l1_gamma: float = 1e-4
    bs_epsilon: float = 0.1
    salun_gamma_quantile: float = 0.5
    salun_alpha: float = 1.0
    scrub_alpha: float = 1.0
    scrub_gamma: float = 1.0
    grad_clip: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "uf_mode", UfMode(self.uf_mode))
        for name in (
            "l1_gamma",
            "bs_epsilon",
            "salun_alpha",
            "scrub_alpha",
            "scrub_gamma",
            "grad_clip",
        ):
            if not getattr(self, name) >= 0:
                raise ConfigError("must be >= 0", f"engine.{name}")
        if not 0.0 <= self.salun_gamma_quantile <= 1.0:
            raise ConfigError("must be in [0, 1]", "engine.salun_gamma_quantile")


@dataclass(frozen=True, eq=False)
class UnlearnOutcome:
    method: str
    params: ClassifierParams
    trace: DynamicsTrace
    rte_seconds: float
    tau: TauMask | None = None
    selected: frozenset[int] | None = None
    notes: tuple[str, ...] = ()


class EngineRun:
    """
    Bookkeeping of one engine invocation.

    Engines read the task only through `view`. The trace is recorded on the
    evaluator side and its cost is kept out of the runtime.
    """

    def __init__(
        self,
        method: str,
        task: UnlearnTask | EngineView,
        dataset: Dataset,
        taxonomy: LabelTaxonomy,
        pretrained: ClassifierParams,
    ) -> None:
        self.method = method
        self.view = task.engine_view() if isinstance(task, UnlearnTask) else task
        self.dataset = dataset
        if pretrained.arch.output_dim != taxonomy.size(self.view.model_level):
            raise ConfigError(
                f"model has {pretrained.arch.output_dim} outputs, "
                f"{self.view.model_level.label} level has {taxonomy.size(self.view.model_level)}",
                "task.model_level",
            )
        if self.view.size != len(dataset):
            raise DataError("task was built for another dataset")
        self.trace = new_trace(task, taxonomy)
        self.notes: list[str] = []
        self.stopwatch = Stopwatch()
        record_epoch(self.trace, pretrained, dataset)
        logger.info(
            "%s: started, |f|=%d |un|=%d", method, len(self.view.f_idx), len(self.view.un_idx)
        )
        self.stopwatch.start()

    @property
    def labels(self) -> np.ndarray:
        return self.dataset.labels(self.view.model_level)

    def role_masks(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.view.size
        f_mask = np.zeros(n, dtype=bool)
        f_mask[self.view.f_idx] = True
        un_mask = np.zeros(n, dtype=bool)
        un_mask[self.view.un_idx] = True
        return f_mask, un_mask

    @contextmanager
    def epoch(self):
        """
        one training epoch; a non-finite value raised inside it fails the run
        with the method and epoch attached.
        """
        try:
            yield
        except NumericError as e:
            raise NumericError(
                f"{self.method}: diverged in epoch {len(self.trace)} ({e}), "
                "lower the learning rate or the forgetting strength"
            ) from e

    def record(self, params: ClassifierParams):
        with self.stopwatch.paused():
            record_epoch(self.trace, params, self.dataset)

    def note(self, text: str):
        logger.warning("%s: %s", self.method, text)
        self.notes.append(text)

    def finish(
        self,
        params: ClassifierParams,
        tau: TauMask | None = None,
        selected=None,
    ) -> UnlearnOutcome:
        rte = self.stopwatch.stop()
        logger.info("%s: finished in %.3fs", self.method, rte)
        return UnlearnOutcome(
            method=self.method,
            params=params.retag(self.method),
            trace=self.trace,
            rte_seconds=rte,
            tau=tau,
            selected=None if selected is None else frozenset(int(x) for x in selected),
            notes=tuple(self.notes),
        )


def engine_step(
    params: ClassifierParams,
    grads: GradientSet,
    cfg: EngineConfig,
    direction: Direction = Direction.DESCENT,
) -> ClassifierParams:
    """
    one update at the engine learning rate with the gradient norm clipped
    to `cfg.grad_clip`.
    """
    grads = clip_grad_norm(grads, cfg.grad_clip)
    return apply_step(params, grads, cfg.train.learning_rate, direction)


def weighted_step(
    params: ClassifierParams,
    dataset: Dataset,
    labels: np.ndarray,
    batch: np.ndarray,
    weights: np.ndarray,
    cfg: EngineConfig,
) -> ClassifierParams:
    """
    one descent step on sum_i w_i * ce_i over the rows of `batch` with a
    non-zero weight; a batch without such rows leaves params untouched.
    """
    rows = weights != 0
    if not rows.any():
        return params
    picked = batch[rows]
    _, grads = weighted_loss_grad(params, dataset.features[picked], labels[picked], weights[rows])
    return engine_step(params, grads, cfg)


def descent_weights(un_mask_batch: np.ndarray, tau_batch: np.ndarray | None = None) -> np.ndarray:
    """
    tau_i / m_un for un members of the batch, 0 elsewhere.
    """
    w = np.zeros(len(un_mask_batch))
    m_un = int(un_mask_batch.sum())
    if m_un:
        tau = np.ones(len(un_mask_batch)) if tau_batch is None else tau_batch
        w[un_mask_batch] = tau[un_mask_batch] / m_un
    return w


def subset_batches(
    indices: np.ndarray, batch_size: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """
    shuffled batches over a subset of the samples.
    """
    return [indices[b] for b in epoch_batches(len(indices), batch_size, rng)]


def fit(
    params: ClassifierParams,
    dataset: Dataset,
    indices,
    level: DomainLevel,
    cfg: TrainConfig,
) -> ClassifierParams:
    """
    plain mini-batch descent on mean cross-entropy over `indices`.
    """
    idx = np.asarray(indices, dtype=np.int64)
    if len(idx) == 0:
        raise DataError("cannot train on an empty index set")
    labels = dataset.labels(level)
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        total = 0.0
        for batch in subset_batches(idx, cfg.batch_size, rng):
            loss, grads = loss_grad(params, dataset.features[batch], labels[batch])
            params = apply_step(params, grads, cfg.learning_rate, Direction.DESCENT)
            total += loss * len(batch)
        logger.debug("epoch %d/%d: loss %.5f", epoch + 1, cfg.epochs, total / len(idx))
    return params


def pretrain(
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    model_level: DomainLevel,
    cfg: TrainConfig,
    hidden_dims=DEFAULT_HIDDEN_DIMS,
) -> ClassifierParams:
    """
    train the original model on the whole dataset at `model_level`.
    """
    model_level = DomainLevel.parse(model_level)
    arch = Architecture(dataset.feature_dim, tuple(hidden_dims), taxonomy.size(model_level))
    params = init_classifier(arch, cfg.seed, cfg.init_scale)
    params = fit(params, dataset, np.arange(len(dataset)), model_level, cfg)
    acc = group_accuracy(params, dataset, np.arange(len(dataset)), model_level)
    logger.info("pretrained at %s level: train accuracy %.2f%%", model_level.label, acc.percent)
    return params.retag("pretrained")


def retrain_reference(
    task: UnlearnTask,
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    cfg: TrainConfig,
    hidden_dims=DEFAULT_HIDDEN_DIMS,
) -> ClassifierParams:
    """
    train from a fresh initialization on the retaining data only.
    """
    if len(task.r_idx) == 0:
        raise DataError("retaining set is empty, nothing to retrain on")
    arch = Architecture(dataset.feature_dim, tuple(hidden_dims), taxonomy.size(task.model_level))
    params = init_classifier(arch, cfg.seed, cfg.init_scale)
    params = fit(params, dataset, task.r_idx, task.model_level, cfg)
    logger.info("retrained reference on %d samples", len(task.r_idx))
    return params.retag("retrained")
