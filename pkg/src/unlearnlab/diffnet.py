"""
Minimal multilayer perceptron with exact analytic gradients.

Layers compute ``a_{l+1} = relu(a_l @ W_l + b_l)``; the last layer has no
activation and feeds softmax + cross-entropy. Weights are stored fan-in x
fan-out, everything is float64.
"""

import enum
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from unlearnlab.errors import ConfigError, DomainError, NumericError, ShapeError
from unlearnlab.taxonomy import Dataset, DomainLevel

logger = logging.getLogger(__name__)


class Direction(enum.Enum):
    DESCENT = "descent"
    ASCENT = "ascent"


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        if any(int(d) < 1 for d in dims):
            raise ShapeError(f"every layer width must be >= 1, got {dims}")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))


def _frozen(arrays) -> tuple[np.ndarray, ...]:
    out = []
    for a in arrays:
        a = np.array(a, dtype=np.float64, copy=True)
        a.setflags(write=False)
        out.append(a)
    return tuple(out)


def _check_layers(arch: Architecture, weights, biases, what: str):
    shapes = arch.layer_shapes
    if len(weights) != len(shapes) or len(biases) != len(shapes):
        raise ShapeError(f"{what}: expected {len(shapes)} layers, got {len(weights)}")
    for (fan_in, fan_out), w, b in zip(shapes, weights, biases):
        if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
            raise ShapeError(
                f"{what}: layer shape {w.shape}/{b.shape} does not match ({fan_in}, {fan_out})"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NumericError(f"{what}: non-finite entry")


@dataclass(frozen=True, eq=False)
class ClassifierParams:
    """
    Parameter value of the classifier. Arrays are read-only; every update
    returns a new instance.
    """

    arch: Architecture
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    tag: str = "init"

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "biases", _frozen(self.biases))
        _check_layers(self.arch, self.weights, self.biases, "params")

    def retag(self, tag: str) -> "ClassifierParams":
        return ClassifierParams(self.arch, self.weights, self.biases, tag)

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def same_as(self, other: "ClassifierParams") -> bool:
        """
        bit-level equality of architecture and every entry.
        """
        return self.arch == other.arch and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )

    def l1_norm(self) -> float:
        return float(sum(np.abs(a).sum() for a in self.arrays()))

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())


@dataclass(frozen=True, eq=False)
class GradientSet:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "biases", _frozen(self.biases))
        for a in self.arrays():
            if not np.all(np.isfinite(a)):
                raise NumericError("gradient has a non-finite entry")

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet(
            tuple(w * factor for w in self.weights), tuple(b * factor for b in self.biases)
        )

    def plus(self, other: "GradientSet") -> "GradientSet":
        return GradientSet(
            tuple(a + b for a, b in zip(self.weights, other.weights)),
            tuple(a + b for a, b in zip(self.biases, other.biases)),
        )

    def masked(self, mask: "GradientSet") -> "GradientSet":
        return GradientSet(
            tuple(a * m for a, m in zip(self.weights, mask.weights)),
            tuple(a * m for a, m in zip(self.biases, mask.biases)),
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    init_scale: float = float(np.sqrt(2.0))

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning rate must be > 0", "learning_rate")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1", "batch_size")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0", "epochs")
        if not self.init_scale > 0:
            raise ConfigError("init scale must be > 0", "init_scale")


class ForwardCache(NamedTuple):
    inputs: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]


class GroupAccuracy(NamedTuple):
    percent: float
    count: int

    @property
    def empty(self) -> bool:
        return self.count == 0


def init_classifier(arch: Architecture, seed: int, init_scale: float) -> ClassifierParams:
    """
    zero-mean uniform weights with standard deviation init_scale/sqrt(fan_in),
    zero biases.
    """
    if init_scale < 0:
        raise ShapeError("init scale must be >= 0")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in arch.layer_shapes:
        unit = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), (fan_in, fan_out))
        weights.append(unit * (init_scale / np.sqrt(fan_in)))
        biases.append(np.zeros(fan_out))
    return ClassifierParams(arch, tuple(weights), tuple(biases), "init")


def _as_inputs(params: ClassifierParams, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.arch.input_dim:
        raise ShapeError(
            f"input width {x.shape[-1]} does not match input_dim {params.arch.input_dim}"
        )
    return x


def _as_labels(params: ClassifierParams, labels, n: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(y) != n:
        raise ShapeError(f"{len(y)} labels for {n} inputs")
    if len(y) and (y.min() < 0 or y.max() >= params.arch.output_dim):
        raise DomainError(f"label out of range [0, {params.arch.output_dim})")
    return y


def forward(params: ClassifierParams, inputs) -> tuple[np.ndarray, ForwardCache]:
    x = _as_inputs(params, inputs)
    pre, post = [], []
    a = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        if i == last:
            return z, ForwardCache(x, pre, post)
        a = np.maximum(z, 0.0)
        pre.append(z)
        post.append(a)
    raise ShapeError("network has no layers")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """
    per-sample cross-entropy.
    """
    return -log_softmax(logits)[np.arange(len(labels)), labels]


def kl_divergence(teacher_probs: np.ndarray, student_logits: np.ndarray) -> np.ndarray:
    """
    per-sample KL(teacher || student), with 0 log 0 = 0.
    """
    log_s = log_softmax(student_logits)
    safe = np.where(teacher_probs > 0, teacher_probs, 1.0)
    return np.sum(np.where(teacher_probs > 0, teacher_probs * (np.log(safe) - log_s), 0.0), axis=1)


def backward(
    params: ClassifierParams, cache: ForwardCache, dlogits: np.ndarray
) -> tuple[GradientSet, np.ndarray]:
    """
    backpropagate d(objective)/d(logits) into parameter and input gradients.
    """
    activations = [cache.inputs, *cache.post]
    dweights = [None] * len(params.weights)
    dbiases = [None] * len(params.biases)
    delta = dlogits
    for layer in range(len(params.weights) - 1, -1, -1):
        dweights[layer] = activations[layer].T @ delta
        dbiases[layer] = delta.sum(axis=0)
        dprev = delta @ params.weights[layer].T
        if layer > 0:
            delta = dprev * (cache.pre[layer - 1] > 0)
    return GradientSet(tuple(dweights), tuple(dbiases)), dprev


def _one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    out = np.zeros((len(labels), classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def weighted_loss_grad(
    params: ClassifierParams, inputs, labels, weights
) -> tuple[float, GradientSet]:
    """
    objective sum_i w_i * ce_i and its exact gradient.

    Negative weights express ascent terms.
    """
    x = _as_inputs(params, inputs)
    y = _as_labels(params, labels, len(x))
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(w) != len(x):
        raise ShapeError(f"{len(w)} weights for {len(x)} inputs")
    logits, cache = forward(params, x)
    losses = cross_entropy(logits, y)
    dlogits = w[:, None] * (softmax(logits) - _one_hot(y, params.arch.output_dim))
    grads, _ = backward(params, cache, dlogits)
    return float(np.dot(w, losses)), grads


def soft_target_grad(
    params: ClassifierParams, inputs, targets: np.ndarray, weights
) -> tuple[float, GradientSet]:
    """
    objective sum_i w_i * KL(targets_i || softmax(f(x_i))) and its gradient.
    """
    x = _as_inputs(params, inputs)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if targets.shape != (len(x), params.arch.output_dim) or len(w) != len(x):
        raise ShapeError("soft targets/weights do not match the batch")
    logits, cache = forward(params, x)
    kl = kl_divergence(targets, logits)
    grads, _ = backward(params, cache, w[:, None] * (softmax(logits) - targets))
    return float(np.dot(w, kl)), grads


def loss_grad(params: ClassifierParams, inputs, labels) -> tuple[float, GradientSet]:
    """
    mean cross-entropy over the batch and its exact gradient.
    """
    x = _as_inputs(params, inputs)
    y = _as_labels(params, labels, len(x))
    if len(x) == 0:
        raise ShapeError("empty batch")
    logits, _ = forward(params, x)
    mean_loss = float(cross_entropy(logits, y).mean())
    _, grads = weighted_loss_grad(params, x, y, np.full(len(x), 1.0 / len(x)))
    return mean_loss, grads


def input_grad(params: ClassifierParams, inputs, labels) -> np.ndarray:
    """
    gradient of each sample's own cross-entropy with respect to its input.
    """
    x = _as_inputs(params, inputs)
    y = _as_labels(params, labels, len(x))
    logits, cache = forward(params, x)
    dlogits = softmax(logits) - _one_hot(y, params.arch.output_dim)
    _, dinputs = backward(params, cache, dlogits)
    return dinputs


def apply_step(
    params: ClassifierParams,
    grads: GradientSet,
    lr: float,
    direction: Direction | str = Direction.DESCENT,
) -> ClassifierParams:
    """
    descent returns theta - lr * g, ascent returns theta + lr * g.
    """
    direction = Direction(direction)
    _check_layers(params.arch, grads.weights, grads.biases, "gradients")
    if direction == Direction.DESCENT:
        weights = tuple(w - lr * g for w, g in zip(params.weights, grads.weights))
        biases = tuple(b - lr * g for b, g in zip(params.biases, grads.biases))
    else:
        weights = tuple(w + lr * g for w, g in zip(params.weights, grads.weights))
        biases = tuple(b + lr * g for b, g in zip(params.biases, grads.biases))
    return ClassifierParams(params.arch, weights, biases, params.tag)


def clip_grad_norm(grads: GradientSet, max_norm: float) -> GradientSet:
    """
    rescale `grads` so their global L2 norm is at most `max_norm`; 0 disables.
    """
    if max_norm < 0:
        raise ConfigError("must be >= 0", "engine.grad_clip")
    if max_norm == 0:
        return grads
    norm = float(np.linalg.norm(grads.flat()))
    if norm <= max_norm:
        return grads
    return grads.scaled(max_norm / norm)


def penultimate_features(params: ClassifierParams, inputs) -> np.ndarray:
    """
    post-activation output of the last hidden layer; the raw input when the
    network has no hidden layer.
    """
    x = _as_inputs(params, inputs)
    if not params.arch.hidden_dims:
        return x.copy()
    _, cache = forward(params, x)
    return cache.post[-1]


def predict(params: ClassifierParams, inputs) -> np.ndarray:
    logits, _ = forward(params, inputs)
    return logits.argmax(axis=1)


def confidences(params: ClassifierParams, inputs) -> np.ndarray:
    """
    max softmax probability per sample.
    """
    logits, _ = forward(params, inputs)
    return softmax(logits).max(axis=1)


def label_confidences(params: ClassifierParams, inputs, labels) -> np.ndarray:
    """
    softmax probability each sample gives its own label.
    """
    x = _as_inputs(params, inputs)
    y = _as_labels(params, labels, len(x))
    logits, _ = forward(params, x)
    return softmax(logits)[np.arange(len(x)), y]


def sample_losses(params: ClassifierParams, inputs, labels) -> np.ndarray:
    x = _as_inputs(params, inputs)
    y = _as_labels(params, labels, len(x))
    logits, _ = forward(params, x)
    return cross_entropy(logits, y)


def group_accuracy(
    params: ClassifierParams, dataset: Dataset, index_set, label_level: DomainLevel
) -> GroupAccuracy:
    """
    percentage of argmax-correct predictions at `label_level` over `index_set`.

    An empty index set is defined as 0 percent with count 0.
    """
    labels = dataset.labels(DomainLevel.parse(label_level))
    idx = np.asarray(index_set, dtype=np.int64).reshape(-1)
    if len(idx) == 0:
        logger.warning("accuracy of an empty group requested, reporting 0")
        return GroupAccuracy(0.0, 0)
    if idx.min() < 0 or idx.max() >= len(dataset):
        raise DomainError("index set is not a subset of the dataset")
    y = labels[idx]
    if y.max() >= params.arch.output_dim:
        raise DomainError(
            f"{DomainLevel.parse(label_level).label} labels exceed the model output size"
        )
    correct = int(np.sum(predict(params, dataset.features[idx]) == y))
    return GroupAccuracy(100.0 * correct / len(idx), len(idx))


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """
    a seeded shuffled visiting order split into batches; the last partial
    batch is kept.
    """
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]
