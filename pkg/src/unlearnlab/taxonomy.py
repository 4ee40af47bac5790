"""
Layered label structure (superclass > class > subset), synthetic
hierarchical datasets and label-domain relation queries.
"""

import enum
import json
import logging
from dataclasses import dataclass

import numpy as np
from sklearn.model_selection import train_test_split

from unlearnlab import utils
from unlearnlab.errors import ConfigError, DataError, DomainError, FormatError

logger = logging.getLogger(__name__)

DATASET_TABLE_HEADER = "# unlearnlab-dataset v1"


class DomainLevel(enum.IntEnum):
    """
    Label granularity, ordered from fine to coarse.
    """

    SUBSET = 0
    CLASS = 1
    SUPERCLASS = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: "str | DomainLevel") -> "DomainLevel":
        if isinstance(text, DomainLevel):
            return text
        key = str(text).strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "subset": cls.SUBSET,
            "class": cls.CLASS,
            "classlabel": cls.CLASS,
            "superclass": cls.SUPERCLASS,
        }
        if key not in aliases:
            raise DomainError(f"unknown label level {text!r}")
        return aliases[key]


class Relation(enum.Enum):
    MATCH = "match"
    SUPERCLASS_OF = "superclass-of"
    SUBCLASS_OF = "subclass-of"


def domain_relation(a: DomainLevel, b: DomainLevel) -> Relation:
    """
    relation of label domain `a` to label domain `b`.

    >>> domain_relation(DomainLevel.SUPERCLASS, DomainLevel.CLASS)
    <Relation.SUPERCLASS_OF: 'superclass-of'>
    """
    if a == b:
        return Relation.MATCH
    if a > b:
        return Relation.SUPERCLASS_OF
    return Relation.SUBCLASS_OF


@dataclass(frozen=True)
class LabelTaxonomy:
    superclass_names: tuple[str, ...]
    class_names: tuple[str, ...]
    subset_names: tuple[str, ...]
    class_to_super: tuple[int, ...]
    subset_to_class: tuple[int, ...]

    def __post_init__(self):
        if len(self.class_to_super) != len(self.class_names):
            raise DomainError("class->superclass map is not total")
        if len(self.subset_to_class) != len(self.subset_names):
            raise DomainError("subset->class map is not total")
        for child_map, parents, what in (
            (self.class_to_super, self.superclass_names, "superclass"),
            (self.subset_to_class, self.class_names, "class"),
        ):
            if any(p < 0 or p >= len(parents) for p in child_map):
                raise DomainError(f"{what} id out of range in taxonomy map")
            if set(child_map) != set(range(len(parents))):
                raise DomainError(f"taxonomy map is not surjective onto {what}es")

    def size(self, level: DomainLevel) -> int:
        return len(self.names(level))

    def names(self, level: DomainLevel) -> tuple[str, ...]:
        match DomainLevel.parse(level):
            case DomainLevel.SUBSET:
                return self.subset_names
            case DomainLevel.CLASS:
                return self.class_names
            case DomainLevel.SUPERCLASS:
                return self.superclass_names

    def label_id(self, name: "str | int", level: DomainLevel) -> int:
        """
        resolve a label given by name or id at `level`.
        """
        level = DomainLevel.parse(level)
        names = self.names(level)
        if isinstance(name, (int, np.integer)) or str(name).isdigit():
            idx = int(name)
            if idx < 0 or idx >= len(names):
                raise DomainError(f"{level.label} id {idx} out of range")
            return idx
        if name not in names:
            raise DomainError(f"unknown {level.label} label {name!r}")
        return names.index(name)

    def lift(self, ids, from_level: DomainLevel, to_level: DomainLevel) -> np.ndarray:
        """
        map label ids at `from_level` to their ancestors at `to_level`.
        """
        from_level, to_level = DomainLevel.parse(from_level), DomainLevel.parse(to_level)
        if to_level < from_level:
            raise DomainError(
                f"cannot map {from_level.label} labels down to {to_level.label}"
            )
        out = np.asarray(ids, dtype=np.int64)
        if from_level == DomainLevel.SUBSET and to_level > DomainLevel.SUBSET:
            out = np.asarray(self.subset_to_class, dtype=np.int64)[out]
            from_level = DomainLevel.CLASS
        if from_level == DomainLevel.CLASS and to_level == DomainLevel.SUPERCLASS:
            out = np.asarray(self.class_to_super, dtype=np.int64)[out]
        return out

    def children(self, label: int, level: DomainLevel, child_level: DomainLevel) -> list[int]:
        """
        ids at `child_level` that fall inside `label` at `level`.
        """
        parents = self.lift(
            np.arange(self.size(child_level)), child_level, level
        )
        return [int(i) for i in np.flatnonzero(parents == label)]

    def to_dict(self) -> dict:
        return {
            "superclass_names": list(self.superclass_names),
            "class_names": list(self.class_names),
            "subset_names": list(self.subset_names),
            "class_to_super": list(self.class_to_super),
            "subset_to_class": list(self.subset_to_class),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LabelTaxonomy":
        return cls(
            superclass_names=tuple(data["superclass_names"]),
            class_names=tuple(data["class_names"]),
            subset_names=tuple(data["subset_names"]),
            class_to_super=tuple(int(x) for x in data["class_to_super"]),
            subset_to_class=tuple(int(x) for x in data["subset_to_class"]),
        )


@dataclass(frozen=True, eq=False)
class Sample:
    features: np.ndarray
    subset_id: int
    class_id: int
    superclass_id: int


def labels_at(sample: Sample, level: DomainLevel, taxonomy: LabelTaxonomy) -> int:
    """
    label id of `sample` at `level`, derived from its subset through the
    taxonomy maps.
    """
    level = DomainLevel.parse(level)
    return int(taxonomy.lift([sample.subset_id], DomainLevel.SUBSET, level)[0])


def _readonly(array: np.ndarray, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Ordered samples stored column-wise.

    `features` is (n, width); the three id arrays have length n.
    """

    features: np.ndarray
    subset_ids: np.ndarray
    class_ids: np.ndarray
    superclass_ids: np.ndarray
    provenance: str = "synthetic"
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", _readonly(self.features, np.float64))
        for name in ("subset_ids", "class_ids", "superclass_ids"):
            object.__setattr__(self, name, _readonly(getattr(self, name), np.int64))
        if self.features.ndim != 2:
            raise DataError("features must be a 2-d array")
        n = self.features.shape[0]
        if not (len(self.subset_ids) == len(self.class_ids) == len(self.superclass_ids) == n):
            raise DataError("id arrays and features disagree on sample count")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def labels(self, level: DomainLevel) -> np.ndarray:
        match DomainLevel.parse(level):
            case DomainLevel.SUBSET:
                return self.subset_ids
            case DomainLevel.CLASS:
                return self.class_ids
            case DomainLevel.SUPERCLASS:
                return self.superclass_ids

    def sample(self, index: int) -> Sample:
        return Sample(
            features=self.features[index],
            subset_id=int(self.subset_ids[index]),
            class_id=int(self.class_ids[index]),
            superclass_id=int(self.superclass_ids[index]),
        )

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            subset_ids=self.subset_ids[idx],
            class_ids=self.class_ids[idx],
            superclass_ids=self.superclass_ids[idx],
            provenance=self.provenance,
            seed=self.seed,
        )


def check_dataset(dataset: Dataset, taxonomy: LabelTaxonomy):
    """
    verify ids are in bounds and consistent with the taxonomy maps.
    """
    for level in DomainLevel:
        ids = dataset.labels(level)
        if len(ids) and (ids.min() < 0 or ids.max() >= taxonomy.size(level)):
            raise DataError(f"{level.label} id out of taxonomy bounds")
    lifted = taxonomy.lift(dataset.subset_ids, DomainLevel.SUBSET, DomainLevel.CLASS)
    if not np.array_equal(lifted, dataset.class_ids):
        raise DataError("subset->class map disagrees with sample class ids")
    lifted = taxonomy.lift(dataset.class_ids, DomainLevel.CLASS, DomainLevel.SUPERCLASS)
    if not np.array_equal(lifted, dataset.superclass_ids):
        raise DataError("class->superclass map disagrees with sample superclass ids")


@dataclass(frozen=True)
class SynthConfig:
    superclasses: int = 4
    classes_per_superclass: int = 3
    subsets_per_class: int = 2
    samples_per_subset: int = 40
    feature_dim: int = 16
    sigma_super: float = 4.0
    sigma_class: float = 1.5
    sigma_subset: float = 0.5
    sigma_noise: float = 0.5
    seed: int = 7

    def __post_init__(self):
        for name in (
            "superclasses",
            "classes_per_superclass",
            "subsets_per_class",
            "samples_per_subset",
            "feature_dim",
        ):
            if getattr(self, name) < 1:
                raise ConfigError("count must be >= 1", f"dataset.synthetic.{name}")
        for name in ("sigma_super", "sigma_class", "sigma_subset", "sigma_noise"):
            if not getattr(self, name) > 0:
                raise ConfigError("dispersion must be > 0", f"dataset.synthetic.{name}")


def synthetic_taxonomy(cfg: SynthConfig) -> LabelTaxonomy:
    n_class = cfg.superclasses * cfg.classes_per_superclass
    n_subset = n_class * cfg.subsets_per_class
    return LabelTaxonomy(
        superclass_names=tuple(f"super{i}" for i in range(cfg.superclasses)),
        class_names=tuple(f"class{i}" for i in range(n_class)),
        subset_names=tuple(f"subset{i}" for i in range(n_subset)),
        class_to_super=tuple(i // cfg.classes_per_superclass for i in range(n_class)),
        subset_to_class=tuple(i // cfg.subsets_per_class for i in range(n_subset)),
    )


def subset_centers(cfg: SynthConfig) -> np.ndarray:
    """
    centers of every subset, drawn top-down from one seeded generator.

    The generator is numpy's PCG64 (`default_rng(seed)`) and each layer is
    drawn in one `normal` call, superclasses first, then classes, then
    subsets, then the per-sample noise in `generate_synthetic`.
    """
    centers, _ = _draw_centers(cfg, np.random.default_rng(cfg.seed))
    return centers


def _draw_centers(cfg: SynthConfig, rng: np.random.Generator):
    taxonomy = synthetic_taxonomy(cfg)
    d = cfg.feature_dim
    super_c = rng.normal(0.0, cfg.sigma_super, (cfg.superclasses, d))
    class_c = super_c[list(taxonomy.class_to_super)] + rng.normal(
        0.0, cfg.sigma_class, (len(taxonomy.class_names), d)
    )
    subset_c = class_c[list(taxonomy.subset_to_class)] + rng.normal(
        0.0, cfg.sigma_subset, (len(taxonomy.subset_names), d)
    )
    return subset_c, taxonomy


def generate_synthetic(cfg: SynthConfig) -> tuple[Dataset, LabelTaxonomy]:
    """
    generate a hierarchical gaussian dataset.

    Samples are laid out subset-major: the first `samples_per_subset` rows
    belong to subset 0, and so on.
    """
    rng = np.random.default_rng(cfg.seed)
    centers, taxonomy = _draw_centers(cfg, rng)
    n_subset = len(taxonomy.subset_names)
    per = cfg.samples_per_subset
    noise = rng.normal(0.0, cfg.sigma_noise, (n_subset * per, cfg.feature_dim))
    subset_ids = np.repeat(np.arange(n_subset), per)
    features = centers[subset_ids] + noise
    class_ids = taxonomy.lift(subset_ids, DomainLevel.SUBSET, DomainLevel.CLASS)
    super_ids = taxonomy.lift(class_ids, DomainLevel.CLASS, DomainLevel.SUPERCLASS)
    dataset = Dataset(
        features=features,
        subset_ids=subset_ids,
        class_ids=class_ids,
        superclass_ids=super_ids,
        provenance="synthetic",
        seed=cfg.seed,
    )
    logger.info(
        "generated synthetic dataset: %d samples, %d/%d/%d labels",
        len(dataset),
        len(taxonomy.superclass_names),
        len(taxonomy.class_names),
        len(taxonomy.subset_names),
    )
    return dataset, taxonomy


def split_dataset(
    dataset: Dataset, test_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """
    stratified (per subset) train/test split.
    """
    if not 0.0 <= test_fraction < 1.0:
        raise ConfigError("test fraction must be in [0, 1)", "dataset.test_fraction")
    everything = np.arange(len(dataset))
    if test_fraction == 0.0:
        return dataset, dataset.subset(everything[:0])
    try:
        train_idx, test_idx = train_test_split(
            everything,
            test_size=test_fraction,
            random_state=seed,
            stratify=dataset.subset_ids,
        )
    except ValueError as e:
        raise ConfigError(f"cannot stratify by subset: {e}", "dataset.test_fraction") from e
    return dataset.subset(np.sort(train_idx)), dataset.subset(np.sort(test_idx))


def write_dataset_table(filename: str, dataset: Dataset, taxonomy: LabelTaxonomy):
    """
    write dataset and taxonomy as a versioned text table, one sample per row:
    subset, class, superclass ids then features.
    """
    meta = {
        "provenance": dataset.provenance,
        "seed": dataset.seed,
        "feature_dim": dataset.feature_dim,
        "samples": len(dataset),
    }
    lines = [
        DATASET_TABLE_HEADER,
        "# taxonomy " + json.dumps(taxonomy.to_dict()),
        "# meta " + json.dumps(meta),
    ]
    for i in range(len(dataset)):
        ids = [dataset.subset_ids[i], dataset.class_ids[i], dataset.superclass_ids[i]]
        values = [str(int(x)) for x in ids] + [repr(float(x)) for x in dataset.features[i]]
        lines.append(",".join(values))
    utils.write_file(filename, "\n".join(lines) + "\n")
    logger.info("wrote dataset table %s", filename)


def read_dataset_table(filename: str) -> tuple[Dataset, LabelTaxonomy]:
    lines = utils.read_file(filename).splitlines()
    if len(lines) < 3 or lines[0] != DATASET_TABLE_HEADER:
        raise FormatError(f"{filename}: not an unlearnlab dataset table")
    try:
        taxonomy = LabelTaxonomy.from_dict(json.loads(lines[1].removeprefix("# taxonomy ")))
        meta = json.loads(lines[2].removeprefix("# meta "))
        rows = [line.split(",") for line in lines[3:] if line]
        width = int(meta["feature_dim"])
        if len(rows) != int(meta["samples"]):
            raise FormatError(f"{filename}: expected {meta['samples']} rows, got {len(rows)}")
        if any(len(row) != width + 3 for row in rows):
            raise FormatError(f"{filename}: ragged row")
        ids = np.array([[int(x) for x in row[:3]] for row in rows], dtype=np.int64).reshape(-1, 3)
        features = np.array([[float(x) for x in row[3:]] for row in rows]).reshape(-1, width)
    except (KeyError, ValueError) as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(f"{filename}: {e}") from e
    dataset = Dataset(
        features=features,
        subset_ids=ids[:, 0],
        class_ids=ids[:, 1],
        superclass_ids=ids[:, 2],
        provenance=meta.get("provenance", "synthetic"),
        seed=meta.get("seed"),
    )
    check_dataset(dataset, taxonomy)
    return dataset, taxonomy
