"""
Baseline unlearning methods: FT, GA, RL, L1-sparse, BS, SalUn and SCRUB.
"""

import logging
import math

import numpy as np

from unlearnlab.diffnet import (
    ClassifierParams,
    Direction,
    GradientSet,
    epoch_batches,
    forward,
    input_grad,
    loss_grad,
    predict,
    soft_target_grad,
    softmax,
    weighted_loss_grad,
)
from unlearnlab.engines.base import (
    EngineConfig,
    EngineRun,
    UnlearnOutcome,
    descent_weights,
    engine_step,
    subset_batches,
    weighted_step,
)
from unlearnlab.errors import ConfigError, MethodError
from unlearnlab.taxonomy import Dataset, LabelTaxonomy

logger = logging.getLogger(__name__)


def ft_run(
    task,
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    pretrained: ClassifierParams,
    cfg: EngineConfig,
) -> UnlearnOutcome:
    """
    fine-tune on the remaining data.
    """
    run = EngineRun("ft", task, dataset, taxonomy, pretrained)
    params = _descend_remaining(run, pretrained, cfg, gamma=0.0)
    return run.finish(params)


def l1_sparse_run(
    task,
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    pretrained: ClassifierParams,
    cfg: EngineConfig,
) -> UnlearnOutcome:
    """
    fine-tune on the remaining data with an L1 penalty gamma * |theta|_1.
    """
    if cfg.l1_gamma < 0:
        raise ConfigError("must be >= 0", "engine.l1_gamma")
    run = EngineRun("l1", task, dataset, taxonomy, pretrained)
    params = _descend_remaining(run, pretrained, cfg, gamma=cfg.l1_gamma)
    return run.finish(params)


def l1_subgradient(params: ClassifierParams, gamma: float) -> GradientSet:
    """
    gamma * sign(theta), zero where theta is exactly zero.
    """
    return GradientSet(
        tuple(gamma * np.sign(w) for w in params.weights),
        tuple(gamma * np.sign(b) for b in params.biases),
    )


def _descend_remaining(
    run: EngineRun, params: ClassifierParams, cfg: EngineConfig, gamma: float
) -> ClassifierParams:
    _, un_mask = run.role_masks()
    labels = run.labels
    rng = np.random.default_rng(cfg.train.seed)
    for epoch in range(cfg.train.epochs):
        with run.epoch():
            for batch in epoch_batches(run.view.size, cfg.train.batch_size, rng):
                w = descent_weights(un_mask[batch])
                if gamma == 0:
                    params = weighted_step(params, run.dataset, labels, batch, w, cfg)
                    continue
                rows = w != 0
                if not rows.any():
                    continue
                picked = batch[rows]
                x = run.dataset.features[picked]
                _, grads = weighted_loss_grad(params, x, labels[picked], w[rows])
                grads = grads.plus(l1_subgradient(params, gamma))
                params = engine_step(params, grads, cfg)
        logger.debug("%s: epoch %d/%d", run.method, epoch + 1, cfg.train.epochs)
        run.record(params)
    return params


def ga_run(
    task,
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    pretrained: ClassifierParams,
    cfg: EngineConfig,
) -> UnlearnOutcome:
    """
    gradient ascent on the forgetting data.
    """
    run = EngineRun("ga", task, dataset, taxonomy, pretrained)
    params = _iterate_forgetting(run, pretrained, cfg, run.labels, Direction.ASCENT)
    return run.finish(params)


def _iterate_forgetting(
    run: EngineRun,
    params: ClassifierParams,
    cfg: EngineConfig,
    labels: np.ndarray,
    direction: Direction,
    relabel=None,
) -> ClassifierParams:
    f_idx = run.view.f_idx
    rng = np.random.default_rng(cfg.train.seed)
    for epoch in range(cfg.train.epochs):
        with run.epoch():
            if relabel is not None:
                labels = relabel(params)
            for batch in subset_batches(f_idx, cfg.train.batch_size, rng):
                _, grads = loss_grad(params, run.dataset.features[batch], labels[batch])
                params = engine_step(params, grads, cfg, direction)
        logger.debug("%s: epoch %d/%d", run.method, epoch + 1, cfg.train.epochs)
        run.record(params)
    return params


def random_relabel(true_labels: np.ndarray, classes: int, seed: int) -> np.ndarray:
    """
    uniformly drawn labels from the output domain, never the true label.
    """
    if classes < 2:
        raise MethodError("random labels need an output domain of at least 2 labels")
    true_labels = np.asarray(true_labels, dtype=np.int64)
    draw = np.random.default_rng(seed).integers(0, classes - 1, size=len(true_labels))
    return draw + (draw >= true_labels)


def _relabelled(run: EngineRun, params: ClassifierParams, seed: int) -> np.ndarray:
    labels = run.labels.copy()
    f_idx = run.view.f_idx
    labels[f_idx] = random_relabel(labels[f_idx], params.arch.output_dim, seed)
    return labels


def rl_run(
    task,
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    pretrained: ClassifierParams,
    cfg: EngineConfig,
) -> UnlearnOutcome:
    """
    descent on the forgetting data with random wrong labels.
    """
    run = EngineRun("rl", task, dataset, taxonomy, pretrained)
    labels = _relabelled(run, pretrained, cfg.rl_seed)
    params = _iterate_forgetting(run, pretrained, cfg, labels, Direction.DESCENT)
    return run.finish(params)


def boundary_labels(
    params: ClassifierParams, inputs, labels, epsilon: float
) -> tuple[np.ndarray, np.ndarray]:
    """
    one sign step of size epsilon along the input gradient of the loss and
    the model's prediction at the shifted point.
    """
    if epsilon < 0:
        raise ConfigError("must be >= 0", "engine.bs_epsilon")
    x = np.asarray(inputs, dtype=np.float64)
    shifted = x + epsilon * np.sign(input_grad(params, x, labels))
    return shifted, predict(params, shifted)


def bs_run(
    task,
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    pretrained: ClassifierParams,
    cfg: EngineConfig,
) -> UnlearnOutcome:
    """
    boundary shrink: descent on the forgetting data toward the labels found
    just across the decision boundary, refreshed every epoch.
    """
    if cfg.bs_epsilon < 0:
        raise ConfigError("must be >= 0", "engine.bs_epsilon")
    run = EngineRun("bs", task, dataset, taxonomy, pretrained)
    f_idx = run.view.f_idx

    def relabel(params: ClassifierParams) -> np.ndarray:
        labels = run.labels.copy()
        _, near = boundary_labels(params, dataset.features[f_idx], labels[f_idx], cfg.bs_epsilon)
        labels[f_idx] = near
        return labels

    params = _iterate_forgetting(run, pretrained, cfg, run.labels, Direction.DESCENT, relabel)
    return run.finish(params)


def saliency_mask(params: ClassifierParams, inputs, labels, quantile: float) -> GradientSet:
    """
    1 where |gradient| reaches the `quantile` of all gradient magnitudes,
    keeping ceil((1 - quantile) * #weights) entries up to ties.
    """
    _, grads = loss_grad(params, inputs, labels)
    magnitudes = np.sort(np.abs(grads.flat()))
    n = len(magnitudes)
    keep = math.ceil((1.0 - quantile) * n)
    if keep == 0:
        threshold = math.inf
    else:
        threshold = magnitudes[n - keep]
    return GradientSet(
        tuple((np.abs(g) >= threshold).astype(np.float64) for g in grads.weights),
        tuple((np.abs(g) >= threshold).astype(np.float64) for g in grads.biases),
    )


def salun_run(
    task,
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    pretrained: ClassifierParams,
    cfg: EngineConfig,
) -> UnlearnOutcome:
    """
    random-label forgetting restricted to salient weights plus an
    alpha-weighted retain term on the remaining data.
    """
    run = EngineRun("salun", task, dataset, taxonomy, pretrained)
    f_idx = run.view.f_idx
    f_mask, un_mask = run.role_masks()
    mask = saliency_mask(
        pretrained, dataset.features[f_idx], run.labels[f_idx], cfg.salun_gamma_quantile
    )
    labels = _relabelled(run, pretrained, cfg.rl_seed)
    logger.debug("salun: %d/%d salient entries", int(mask.flat().sum()), pretrained.size)

    params = pretrained
    rng = np.random.default_rng(cfg.train.seed)
    for epoch in range(cfg.train.epochs):
        with run.epoch():
            for batch in epoch_batches(run.view.size, cfg.train.batch_size, rng):
                forget = batch[f_mask[batch]]
                remain = batch[un_mask[batch]]
                total = None
                if len(forget):
                    _, g = loss_grad(params, dataset.features[forget], labels[forget])
                    total = g.masked(mask)
                if len(remain) and cfg.salun_alpha > 0:
                    _, g = loss_grad(params, dataset.features[remain], labels[remain])
                    g = g.scaled(cfg.salun_alpha)
                    total = g if total is None else total.plus(g)
                if total is not None:
                    params = engine_step(params, total, cfg)
        logger.debug("salun: epoch %d/%d", epoch + 1, cfg.train.epochs)
        run.record(params)
    return run.finish(params)


def scrub_run(
    task,
    dataset: Dataset,
    taxonomy: LabelTaxonomy,
    pretrained: ClassifierParams,
    cfg: EngineConfig,
) -> UnlearnOutcome:
    """
    student/teacher scrubbing: each epoch one descent pass over the remaining
    data on alpha * KL(teacher || student) + gamma * CE, then one ascent pass
    over the forgetting data on KL(teacher || student).
    """
    run = EngineRun("scrub", task, dataset, taxonomy, pretrained)
    view = run.view
    labels = run.labels
    logits, _ = forward(pretrained, dataset.features)
    teacher = softmax(logits)
    params = pretrained
    rng = np.random.default_rng(cfg.train.seed)
    for epoch in range(cfg.train.epochs):
        with run.epoch():
            for batch in subset_batches(view.un_idx, cfg.train.batch_size, rng):
                w = np.full(len(batch), 1.0 / len(batch))
                x = dataset.features[batch]
                _, g_kl = soft_target_grad(params, x, teacher[batch], cfg.scrub_alpha * w)
                _, g_ce = weighted_loss_grad(params, x, labels[batch], cfg.scrub_gamma * w)
                params = engine_step(params, g_kl.plus(g_ce), cfg)
            for batch in subset_batches(view.f_idx, cfg.train.batch_size, rng):
                w = np.full(len(batch), 1.0 / len(batch))
                _, g = soft_target_grad(params, dataset.features[batch], teacher[batch], w)
                params = engine_step(params, g, cfg, Direction.ASCENT)
        logger.debug("scrub: epoch %d/%d", epoch + 1, cfg.train.epochs)
        run.record(params)
    return run.finish(params)
