"""
CIFAR binary batch ingestion.

cifar-10 record: <1 x label><3072 x pixel>
cifar-100 record: <1 x coarse label><1 x fine label><3072 x pixel>
"""

import logging
import os
from dataclasses import replace
from io import BufferedIOBase

import numpy as np

from unlearnlab.errors import DomainError, FormatError
from unlearnlab.taxonomy import Dataset, DomainLevel, LabelTaxonomy

logger = logging.getLogger(__name__)

PIXELS = 3072
RECORD_SIZE = {"cifar10": 1 + PIXELS, "cifar100": 2 + PIXELS}

CIFAR10_CLASSES = (
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
)

# manual 5 x 2 pairing; CIFAR-10 ships no superclass information.
CIFAR10_GROUPS = (
    ("group-1", ("airplane", "bird")),
    ("group-2", ("automobile", "truck")),
    ("group-3", ("cat", "dog")),
    ("group-4", ("deer", "frog")),
    ("group-5", ("horse", "ship")),
)

CIFAR100_CLASSES = (
    "apple", "aquarium_fish", "baby", "bear", "beaver", "bed", "bee", "beetle",
    "bicycle", "bottle", "bowl", "boy", "bridge", "bus", "butterfly", "camel",
    "can", "castle", "caterpillar", "cattle", "chair", "chimpanzee", "clock",
    "cloud", "cockroach", "couch", "crab", "crocodile", "cup", "dinosaur",
    "dolphin", "elephant", "flatfish", "forest", "fox", "girl", "hamster",
    "house", "kangaroo", "keyboard", "lamp", "lawn_mower", "leopard", "lion",
    "lizard", "lobster", "man", "maple_tree", "motorcycle", "mountain", "mouse",
    "mushroom", "oak_tree", "orange", "orchid", "otter", "palm_tree", "pear",
    "pickup_truck", "pine_tree", "plain", "plate", "poppy", "porcupine",
    "possum", "rabbit", "raccoon", "ray", "road", "rocket", "rose", "sea",
    "seal", "shark", "shrew", "skunk", "skyscraper", "snail", "snake", "spider",
    "squirrel", "streetcar", "sunflower", "sweet_pepper", "table", "tank",
    "telephone", "television", "tiger", "tractor", "train", "trout", "tulip",
    "turtle", "wardrobe", "whale", "willow_tree", "wolf", "woman", "worm",
)

CIFAR100_GROUPS = (
    ("aquatic_mammals", ("beaver", "dolphin", "otter", "seal", "whale")),
    ("fish", ("aquarium_fish", "flatfish", "ray", "shark", "trout")),
    ("flowers", ("orchid", "poppy", "rose", "sunflower", "tulip")),
    ("food_containers", ("bottle", "bowl", "can", "cup", "plate")),
    ("fruit_and_vegetables", ("apple", "mushroom", "orange", "pear", "sweet_pepper")),
    ("household_electrical_devices", ("clock", "keyboard", "lamp", "telephone", "television")),
    ("household_furniture", ("bed", "chair", "couch", "table", "wardrobe")),
    ("insects", ("bee", "beetle", "butterfly", "caterpillar", "cockroach")),
    ("large_carnivores", ("bear", "leopard", "lion", "tiger", "wolf")),
    ("large_man-made_outdoor_things", ("bridge", "castle", "house", "road", "skyscraper")),
    ("large_natural_outdoor_scenes", ("cloud", "forest", "mountain", "plain", "sea")),
    ("large_omnivores_and_herbivores", ("camel", "cattle", "chimpanzee", "elephant", "kangaroo")),
    ("medium_mammals", ("fox", "porcupine", "possum", "raccoon", "skunk")),
    ("non-insect_invertebrates", ("crab", "lobster", "snail", "spider", "worm")),
    ("people", ("baby", "boy", "girl", "man", "woman")),
    ("reptiles", ("crocodile", "dinosaur", "lizard", "snake", "turtle")),
    ("small_mammals", ("hamster", "mouse", "rabbit", "shrew", "squirrel")),
    ("trees", ("maple_tree", "oak_tree", "palm_tree", "pine_tree", "willow_tree")),
    ("vehicles_1", ("bicycle", "bus", "motorcycle", "pickup_truck", "train")),
    ("vehicles_2", ("lawn_mower", "rocket", "streetcar", "tank", "tractor")),
)


def _grouped_taxonomy(classes, groups) -> LabelTaxonomy:
    owner = {name: gid for gid, (_, members) in enumerate(groups) for name in members}
    return LabelTaxonomy(
        superclass_names=tuple(name for name, _ in groups),
        class_names=tuple(classes),
        # one subset per class keeps three-level queries total
        subset_names=tuple(f"{name}/all" for name in classes),
        class_to_super=tuple(owner[name] for name in classes),
        subset_to_class=tuple(range(len(classes))),
    )


def cifar10_taxonomy() -> LabelTaxonomy:
    return _grouped_taxonomy(CIFAR10_CLASSES, CIFAR10_GROUPS)


def cifar100_taxonomy() -> LabelTaxonomy:
    return _grouped_taxonomy(CIFAR100_CLASSES, CIFAR100_GROUPS)


def taxonomy_for(variant: str) -> LabelTaxonomy:
    match variant:
        case "cifar10":
            return cifar10_taxonomy()
        case "cifar100":
            return cifar100_taxonomy()
        case _:
            raise DomainError(f"unknown cifar variant {variant!r}")


def _file_taxonomy(
    taxonomy: LabelTaxonomy, class_ids: np.ndarray, super_ids: np.ndarray
) -> LabelTaxonomy:
    """
    class -> superclass map taken from the coarse labels of the records;
    fine labels absent from the file keep the standard grouping.
    """
    owner = list(taxonomy.class_to_super)
    pairs = np.unique(np.stack([class_ids, super_ids], axis=1), axis=0)
    fine, counts = np.unique(pairs[:, 0], return_counts=True)
    if np.any(counts > 1):
        raise FormatError(
            f"fine label {int(fine[counts > 1][0])} appears under more than one coarse label"
        )
    for class_id, super_id in pairs:
        owner[int(class_id)] = int(super_id)
    if tuple(owner) == taxonomy.class_to_super:
        return taxonomy
    moved = [
        name
        for name, new, old in zip(taxonomy.class_names, owner, taxonomy.class_to_super)
        if new != old
    ]
    logger.warning("coarse labels regroup %d classes: %s", len(moved), ", ".join(moved))
    try:
        return replace(taxonomy, class_to_super=tuple(owner))
    except DomainError as e:
        raise FormatError(f"coarse labels give an invalid taxonomy: {e}") from e


def read_records(r: BufferedIOBase, variant: str) -> np.ndarray:
    """
    read raw records of a cifar binary batch as a (n, record_size) byte matrix.
    """
    if variant not in RECORD_SIZE:
        raise DomainError(f"unknown cifar variant {variant!r}")
    size = RECORD_SIZE[variant]
    data = r.read()
    if len(data) == 0 or len(data) % size != 0:
        raise FormatError(
            f"truncated {variant} batch: {len(data)} bytes is not a multiple of {size}"
        )
    return np.frombuffer(data, dtype=np.uint8).reshape(-1, size)


def load_cifar_binary(path: str | list[str], variant: str) -> tuple[Dataset, LabelTaxonomy]:
    """
    load one or more cifar binary batch files.

    Parameters
    ----------
    path : str | list[str]
        batch file, or several files concatenated in order
    variant : str
        cifar10 or cifar100

    Returns
    -------
    tuple[Dataset, LabelTaxonomy]
        pixels scaled to [0, 1]; class ids from the fine label
    """
    taxonomy = taxonomy_for(variant)
    paths = [path] if isinstance(path, str) else list(path)
    blocks = []
    for filename in paths:
        with open(filename, "rb") as f:
            blocks.append(read_records(f, variant))
        logger.info("read %d %s records from %s", len(blocks[-1]), variant, filename)
    records = np.concatenate(blocks)

    n_class = len(taxonomy.class_names)
    if variant == "cifar10":
        class_ids = records[:, 0].astype(np.int64)
        if class_ids.max() >= n_class:
            raise FormatError(f"label byte {class_ids.max()} out of range")
        super_ids = taxonomy.lift(class_ids, DomainLevel.CLASS, DomainLevel.SUPERCLASS)
    else:
        super_ids = records[:, 0].astype(np.int64)
        class_ids = records[:, 1].astype(np.int64)
        if class_ids.max() >= n_class:
            raise FormatError(f"fine label byte {class_ids.max()} out of range")
        if super_ids.max() >= len(taxonomy.superclass_names):
            raise FormatError(f"coarse label byte {super_ids.max()} out of range")
        taxonomy = _file_taxonomy(taxonomy, class_ids, super_ids)

    offset = RECORD_SIZE[variant] - PIXELS
    dataset = Dataset(
        features=records[:, offset:].astype(np.float64) / 255.0,
        subset_ids=class_ids,
        class_ids=class_ids,
        superclass_ids=super_ids,
        provenance=variant,
        seed=None,
    )
    return dataset, taxonomy


def write_cifar_binary(filename: str, dataset: Dataset, variant: str):
    """
    serialize a dataset back into the cifar binary layout.
    """
    if variant not in RECORD_SIZE:
        raise DomainError(f"unknown cifar variant {variant!r}")
    if dataset.feature_dim != PIXELS:
        raise FormatError(f"cifar records need {PIXELS} features, got {dataset.feature_dim}")
    pixels = np.rint(dataset.features * 255.0).astype(np.uint8)
    if variant == "cifar10":
        head = dataset.class_ids.astype(np.uint8)[:, None]
    else:
        head = np.stack([dataset.superclass_ids, dataset.class_ids], axis=1).astype(np.uint8)
    records = np.concatenate([head, pixels], axis=1)
    dir = os.path.dirname(filename)
    if dir and not os.path.exists(dir):
        os.makedirs(dir)
    with open(filename, "wb") as f:
        f.write(records.tobytes())
