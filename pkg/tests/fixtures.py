import os
import tempfile
from contextlib import contextmanager
from functools import lru_cache

import numpy as np

from unlearnlab.diffnet import Architecture, TrainConfig, init_classifier
from unlearnlab.engines import pretrain
from unlearnlab.taxonomy import DomainLevel, SynthConfig, generate_synthetic, split_dataset

# 3 superclasses x 3 classes x 2 subsets x 16 samples = 288 samples
SMALL_SYNTH = SynthConfig(
    superclasses=3,
    classes_per_superclass=3,
    subsets_per_class=2,
    samples_per_subset=16,
    feature_dim=8,
    seed=11,
)
SMALL_HIDDEN = (16, 8)


@lru_cache(maxsize=None)
def small_data(cfg: SynthConfig = SMALL_SYNTH, test_fraction: float = 0.25):
    dataset, taxonomy = generate_synthetic(cfg)
    train, test = split_dataset(dataset, test_fraction, seed=0)
    return train, test, taxonomy


@lru_cache(maxsize=None)
def small_pretrained(
    level: DomainLevel = DomainLevel.CLASS,
    seed: int = 0,
    cfg: SynthConfig = SMALL_SYNTH,
    epochs: int = 30,
):
    train, _, taxonomy = small_data(cfg)
    train_cfg = TrainConfig(learning_rate=0.01, batch_size=16, epochs=epochs, seed=seed)
    return pretrain(train, taxonomy, level, train_cfg, SMALL_HIDDEN)


def random_params(seed: int, input_dim=4, hidden_dims=(5, 3), output_dim=3):
    arch = Architecture(input_dim, hidden_dims, output_dim)
    return init_classifier(arch, seed, 1.0)


def random_batch(seed: int, n: int, input_dim: int, classes: int):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, input_dim)), rng.integers(0, classes, size=n)


@contextmanager
def temp_dir():
    with tempfile.TemporaryDirectory() as d:
        yield d


@contextmanager
def env(**values):
    saved = {k: os.environ.get(k) for k in values}
    os.environ.update(values)
    try:
        yield
    finally:
        for k, v in saved.items():
            if v is None:
                os.environ.pop(k, None)
            else:
                os.environ[k] = v


TINY_CONFIG = """
[experiment]
name = tiny
output_dir = {output}
seeds = 0, 1, 2
methods = ft, ga

[dataset.synthetic]
superclasses = 2
classes_per_superclass = 2
subsets_per_class = 2
samples_per_subset = 10
feature_dim = 6

[model]
hidden_dims = 8

[pretrain]
epochs = 5
batch_size = 16

[unlearn]
epochs = 2
batch_size = 16

[schedule]
t0 = 0
t1 = 1

[task]
forgetting_labels = class0
"""


def tiny_config_file(directory: str, extra: str = "") -> str:
    """
    write the tiny experiment config into `directory`, outputs below it.
    `extra` may only add sections the template does not have.
    """
    text = TINY_CONFIG.format(output=os.path.join(directory, "runs")) + extra
    filename = os.path.join(directory, "tiny.ini")
    with open(filename, "w") as f:
        f.write(text)
    return filename
