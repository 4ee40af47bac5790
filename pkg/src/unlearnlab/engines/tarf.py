"""
Target-aware forgetting.

Every epoch visits the whole training set in shuffled mini-batches. Inside a
batch of size B, forgetting samples carry the ascent weight -k(t)/B and
remaining samples the descent weight tau/m_un, so one epoch of ascent moves
as far as k(t) epochs of gradient ascent. Before t1 tau is zero, so only the
ascent term acts; at t1 the change of every unit since the start is
thresholded and tau is frozen for the rest of the run.
"""

import logging
from dataclasses import replace

import numpy as np

from unlearnlab.diffnet import ClassifierParams, epoch_batches, sample_losses
from unlearnlab.dynamics import unit_accuracies
from unlearnlab.engines.base import (
    EngineConfig,
    EngineRun,
    UfMode,
    UnlearnOutcome,
    descent_weights,
    weighted_step,
)
from unlearnlab.errors import ConfigError
from unlearnlab.schedules import (
    AnnealSchedule,
    Granularity,
    TauMask,
    TauPolicy,
    con_indicator,
    estimate_beta,
    k_at,
    tau_mask,
)
from unlearnlab.taxonomy import Dataset, LabelTaxonomy
from unlearnlab.tasks import ScenarioKind, classify_scenario

logger = logging.getLogger(__name__)


def _schedule(cfg: EngineConfig) -> AnnealSchedule:
    if cfg.sched is None:
        raise ConfigError("target-aware forgetting needs a schedule", "schedule")
    if cfg.sched.T != cfg.train.epochs:
        raise ConfigError(
            f"schedule covers {cfg.sched.T} epochs but training runs {cfg.train.epochs}",
            "schedule.T",
        )
    return cfg.sched


class _ClassUnits:
    """
    identification units are the data-level labels of the remaining samples,
    scored by expected accuracy against the model-level label.
    """

    def __init__(self, run: EngineRun, taxonomy: LabelTaxonomy) -> None:
        self.run = run
        view = run.view
        self.n_units = taxonomy.size(view.spec.data_level)
        self.sample_units = run.dataset.labels(view.spec.data_level)[view.un_idx]
        self.units = np.unique(self.sample_units)

    def measure(self, params: ClassifierParams) -> np.ndarray:
        view = self.run.view
        acc = unit_accuracies(
            params,
            self.run.dataset,
            view.un_idx,
            view.spec.data_level,
            view.model_level,
            self.n_units,
            expected=True,
        )
        return acc[self.units]

    def sample_tau(self, values: np.ndarray) -> np.ndarray:
        lookup = np.zeros(self.n_units)
        lookup[self.units] = values
        return lookup[self.sample_units]

    def selected(self, mask: TauMask) -> list[int]:
        return self.units[mask.values == 0].tolist()


class _SampleUnits:
    """
    identification units are the remaining samples, scored by loss.
    """

    def __init__(self, run: EngineRun) -> None:
        self.run = run

    def measure(self, params: ClassifierParams) -> np.ndarray:
        idx = self.run.view.un_idx
        return sample_losses(params, self.run.dataset.features[idx], self.run.labels[idx])

    def sample_tau(self, values: np.ndarray) -> np.ndarray:
        return values.astype(np.float64)

    def selected(self, mask: TauMask) -> None:
        return None


def batch_weights(
    f_batch: np.ndarray,
    un_batch: np.ndarray,
    tau_batch: np.ndarray,
    k: float,
    retaining: bool,
    uf_mode: UfMode = UfMode.CLEAN,
) -> np.ndarray:
    """
    per-sample loss weights of one batch.

    Ascending samples get -k / B for a batch of size B, remaining samples
    tau / m_un once retaining has started. In ascend mode the excluded
    remaining samples ascend with the forgetting ones.
    """
    w = descent_weights(un_batch, tau_batch) if retaining else np.zeros(len(f_batch))
    ascending = np.array(f_batch, dtype=bool)
    if retaining and UfMode(uf_mode) == UfMode.ASCEND:
        ascending |= un_batch & (tau_batch == 0)
    if k > 0:
        w[ascending] = -k / len(f_batch)
    return w


def _tarf_loop(
    run: EngineRun,
    units,
    pretrained: ClassifierParams,
    cfg: EngineConfig,
    granularity: Granularity,
) -> UnlearnOutcome:
    sched = _schedule(cfg)
    view = run.view
    policy = replace(cfg.tau_policy, granularity=granularity).with_declared_count(
        view.declared_unidentified_count
    )
    if sched.t1 == 0 and _estimates_beta(policy):
        raise ConfigError("must be >= 1 when the threshold is estimated", "schedule.t1")
    dataset, labels = run.dataset, run.labels
    f_mask, un_mask = run.role_masks()

    with run.stopwatch.paused():
        baseline = units.measure(pretrained)

    params = pretrained
    tau_full = np.zeros(view.size)
    mask = None
    rng = np.random.default_rng(cfg.train.seed)
    for t in range(sched.T):
        if t == sched.t1:
            with run.stopwatch.paused():
                current = units.measure(params)
            changes = con_indicator(baseline, current)
            beta = estimate_beta(changes, policy)
            mask = tau_mask(changes, beta, t, sched.t1)
            logger.debug(
                "%s: beta %.6g, %d/%d units retained", run.method, beta, mask.retained, len(mask)
            )
        if mask is not None:
            tau_full[view.un_idx] = units.sample_tau(mask.at(t))
        retaining = t >= sched.t1
        k = k_at(sched, t)
        with run.epoch():
            for batch in epoch_batches(view.size, cfg.train.batch_size, rng):
                w = batch_weights(
                    f_mask[batch], un_mask[batch], tau_full[batch], k, retaining, cfg.uf_mode
                )
                params = weighted_step(params, dataset, labels, batch, w, cfg)
        logger.debug(
            "%s: epoch %d/%d, k=%.5f, retaining=%s", run.method, t + 1, sched.T, k, retaining
        )
        run.record(params)

    selected = units.selected(mask) if mask is not None else None
    return run.finish(params, tau=mask, selected=selected)


def _estimates_beta(policy: TauPolicy) -> bool:
    if policy.beta_override is not None:
        return False
    return not (policy.granularity == Granularity.CLASSWISE and policy.declared_count == 0)


def tarf_run(
    task,
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    pretrained: ClassifierParams,
    cfg: EngineConfig,
) -> UnlearnOutcome:
    """
    class-wise target-aware forgetting.

    The threshold is set from the declared number of unidentified labels
    (policy value first, the task's declared count otherwise).
    """
    run = EngineRun("tarf", task, dataset, taxonomy, pretrained)
    return _tarf_loop(run, _ClassUnits(run, taxonomy), pretrained, cfg, Granularity.CLASSWISE)


def tarf_instance_run(
    task,
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    pretrained: ClassifierParams,
    cfg: EngineConfig,
) -> UnlearnOutcome:
    """
    instance-wise target-aware forgetting; tau is a per-sample mask set by
    the (1 - q) quantile of the per-sample loss changes.
    """
    run = EngineRun("tarf-i", task, dataset, taxonomy, pretrained)
    if (
        classify_scenario(run.view.spec).kind == ScenarioKind.MODEL_MISMATCH
        and cfg.tau_policy.beta_override is None
    ):
        run.note(
            "instance-wise tau under model mismatch may permanently exclude "
            "same-superclass retaining samples"
        )
    return _tarf_loop(run, _SampleUnits(run), pretrained, cfg, Granularity.INSTANCEWISE)
