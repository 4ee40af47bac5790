"""
Experiment configuration: an INI file with dotted section names.

    [experiment]
    seeds = 0, 1, 2
    methods = tarf, ft, ga

    [task]
    data_level = class
    model_level = class
    target_level = superclass
    forgetting_labels = class0
    target_labels = super0

Every key has a default; `unlearnlab schema` prints them all.
"""

import configparser
import logging
import os
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple

from unlearnlab.diffnet import TrainConfig
from unlearnlab.engines import ENGINES, EngineConfig
from unlearnlab.errors import ConfigError
from unlearnlab.schedules import AnnealSchedule, TauPolicy
from unlearnlab.taxonomy import DomainLevel, SynthConfig
from unlearnlab.tasks import ScenarioSpec

logger = logging.getLogger(__name__)

OUTPUT_ENV = "UNLEARNLAB_OUTPUT"
DATA_SOURCES = ("synthetic", "table", "cifar10", "cifar100")


def _text(value: str) -> str:
    return value.strip()


def _int(value: str) -> int:
    return int(value)


def _float(value: str) -> float:
    return float(value)


def _optional_int(value: str) -> int | None:
    return int(value) if value.strip() else None


def _optional_float(value: str) -> float | None:
    return float(value) if value.strip() else None


def _items(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _ints(value: str) -> list[int]:
    return [int(item) for item in _items(value)]


def _level(value: str) -> DomainLevel:
    return DomainLevel.parse(value)


class Key(NamedTuple):
    name: str
    default: str
    parse: Callable[[str], Any]
    help: str


SCHEMA: dict[str, list[Key]] = {
    "experiment": [
        Key("name", "unlearnlab", _text, "experiment name, used in output paths"),
        Key("output_dir", "runs", _text, f"output root (overridden by ${OUTPUT_ENV})"),
        Key("seeds", "0", _ints, "comma separated run seeds"),
        Key("methods", "tarf, ft, ga, rl", _items, "comma separated engine names"),
        Key("parallel", "1", _int, "sweep worker threads"),
    ],
    "dataset": [
        Key("source", "synthetic", _text, "synthetic, table, cifar10 or cifar100"),
        Key("path", "", _items, "dataset table, or comma separated cifar training batch files"),
        Key("test_path", "", _items, "test table or cifar batch files, split from path when empty"),
        Key("test_fraction", "0.2", _float, "held-out fraction when splitting"),
        Key("split_seed", "0", _int, "seed of the train/test split"),
    ],
    "dataset.synthetic": [
        Key("superclasses", "4", _int, "number of superclasses"),
        Key("classes_per_superclass", "3", _int, "classes under each superclass"),
        Key("subsets_per_class", "2", _int, "subsets under each class"),
        Key("samples_per_subset", "40", _int, "samples drawn per subset"),
        Key("feature_dim", "16", _int, "feature width"),
        Key("sigma_super", "4.0", _float, "spread of superclass centers"),
        Key("sigma_class", "1.5", _float, "spread of class centers around their superclass"),
        Key("sigma_subset", "0.5", _float, "spread of subset centers around their class"),
        Key("sigma_noise", "0.5", _float, "per-sample noise"),
        Key("seed", "7", _int, "generation seed"),
    ],
    "model": [
        Key("hidden_dims", "64, 32", _ints, "hidden layer widths"),
        Key("init_scale", "1.4142135623730951", _float, "weight std times sqrt(fan_in)"),
    ],
    "pretrain": [
        Key("learning_rate", "0.01", _float, "learning rate of the original model"),
        Key("batch_size", "32", _int, "mini-batch size"),
        Key("epochs", "30", _int, "training epochs"),
    ],
    "task": [
        Key("data_level", "class", _level, "label level of the forgetting request"),
        Key("model_level", "class", _level, "label level of the model output"),
        Key("target_level", "class", _level, "label level of the target concept"),
        Key("forgetting_labels", "0", _items, "forgetting labels, by name or id"),
        Key("target_labels", "", _items, "target concept labels, defaults to forgetting labels"),
    ],
    "unlearn": [
        Key("learning_rate", "0.05", _float, "learning rate of every engine"),
        Key("batch_size", "32", _int, "mini-batch size"),
        Key("epochs", "10", _int, "unlearning epochs, also the schedule's T"),
    ],
    "schedule": [
        Key("k", "1.0", _float, "initial forgetting strength"),
        Key("t0", "2", _int, "k(t) reaches zero at T - t0"),
        Key("t1", "1", _int, "epoch at which tau is frozen and retaining starts"),
        Key("mode", "annealed", _text, "annealed, constant or increasing"),
    ],
    "tau": [
        Key("granularity", "classwise", _text, "classwise or instancewise"),
        Key("declared_count", "", _optional_int, "unidentified labels, defaults to the task's"),
        Key("quantile", "0.1", _float, "instance-wise share of samples excluded"),
        Key("beta_override", "", _optional_float, "fixed threshold, skips estimation"),
    ],
    "engine": [
        Key("uf_mode", "clean", _text, "ascend or clean for excluded remaining data"),
        Key("rl_seed", "0", _int, "seed of the random labels (rl, salun)"),
        Key("l1_gamma", "0.0001", _float, "l1 penalty strength"),
        Key("bs_epsilon", "0.1", _float, "boundary shrink step size"),
        Key("salun_gamma_quantile", "0.5", _float, "share of weights outside the saliency mask"),
        Key("salun_alpha", "1.0", _float, "salun retain weight"),
        Key("scrub_alpha", "1.0", _float, "scrub retain KL weight"),
        Key("scrub_gamma", "1.0", _float, "scrub retain cross-entropy weight"),
        Key("grad_clip", "5.0", _float, "max gradient norm of one engine step, 0 disables"),
    ],
}


def format_schema() -> str:
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key in keys:
            lines.append(f"# {key.help}")
            lines.append(f"{key.name} = {key.default}")
        lines.append("")
    return "\n".join(lines)


def _build(section: str, factory, **kwargs):
    """
    construct a validated value, prefixing field paths with `section`.
    """
    try:
        return factory(**kwargs)
    except ConfigError as e:
        if e.field and "." not in e.field:
            raise ConfigError(str(e).split(": ", 1)[-1], f"{section}.{e.field}") from e
        raise
    except ValueError as e:
        raise ConfigError(str(e), section) from e


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict[str, dict[str, Any]]

    def get(self, section: str, key: str) -> Any:
        return self.values[section][key]

    @property
    def name(self) -> str:
        return self.get("experiment", "name")

    @property
    def output_dir(self) -> str:
        return self.get("experiment", "output_dir")

    @property
    def seeds(self) -> list[int]:
        return list(self.get("experiment", "seeds"))

    @property
    def methods(self) -> list[str]:
        return list(self.get("experiment", "methods"))

    @property
    def parallel(self) -> int:
        return self.get("experiment", "parallel")

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(self.get("model", "hidden_dims"))

    def synth_config(self) -> SynthConfig:
        return _build("dataset.synthetic", SynthConfig, **self.values["dataset.synthetic"])

    def scenario_spec(self) -> ScenarioSpec:
        task = self.values["task"]
        return ScenarioSpec(task["data_level"], task["model_level"], task["target_level"])

    def forgetting_labels(self) -> list[str]:
        return self.get("task", "forgetting_labels")

    def target_labels(self) -> list[str] | None:
        return self.get("task", "target_labels") or None

    def pretrain_config(self, seed: int) -> TrainConfig:
        return _build(
            "pretrain",
            TrainConfig,
            seed=seed,
            init_scale=self.get("model", "init_scale"),
            **self.values["pretrain"],
        )

    def unlearn_config(self, seed: int) -> TrainConfig:
        return _build(
            "unlearn",
            TrainConfig,
            seed=seed,
            init_scale=self.get("model", "init_scale"),
            **self.values["unlearn"],
        )

    def engine_config(self, seed: int) -> EngineConfig:
        sched = self.values["schedule"]
        schedule = _build(
            "schedule",
            AnnealSchedule,
            k=sched["k"],
            t0=sched["t0"],
            t1=sched["t1"],
            T=self.get("unlearn", "epochs"),
            mode=sched["mode"],
        )
        tau = _build("tau", TauPolicy, **self.values["tau"])
        engine = self.values["engine"]
        return _build(
            "engine",
            EngineConfig,
            train=self.unlearn_config(seed),
            sched=schedule,
            tau_policy=tau,
            **engine,
        )

    def normalized_text(self) -> str:
        """
        canonical text of every resolved value, used for hashing.
        """
        lines = []
        for section in SCHEMA:
            lines.append(f"[{section}]")
            for key in SCHEMA[section]:
                value = self.values[section][key.name]
                if isinstance(value, DomainLevel):
                    value = value.label
                lines.append(f"{key.name} = {value!r}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, environ: dict[str, str] | None = None) -> ExperimentConfig:
    """
    parse configuration text; unknown sections and keys are rejected.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"unreadable config: {e}") from e
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError("unknown section", section)
        known = {key.name for key in SCHEMA[section]}
        for name in parser[section]:
            if name not in known:
                raise ConfigError("unknown key", f"{section}.{name}")

    values: dict[str, dict[str, Any]] = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key in keys:
            raw = key.default
            if parser.has_option(section, key.name):
                raw = parser.get(section, key.name)
            try:
                values[section][key.name] = key.parse(raw)
            except ValueError as e:
                raise ConfigError(f"invalid value {raw!r} ({e})", f"{section}.{key.name}") from e

    environ = os.environ if environ is None else environ
    if environ.get(OUTPUT_ENV):
        values["experiment"]["output_dir"] = environ[OUTPUT_ENV]
    cfg = ExperimentConfig(values)
    _check(cfg)
    return cfg


def _check(cfg: ExperimentConfig):
    if not cfg.seeds:
        raise ConfigError("at least one seed is required", "experiment.seeds")
    if not cfg.methods:
        raise ConfigError("at least one method is required", "experiment.methods")
    for method in cfg.methods:
        if method not in ENGINES:
            raise ConfigError(f"unknown method {method!r}", "experiment.methods")
    if len(set(cfg.methods)) != len(cfg.methods):
        raise ConfigError("methods are listed twice", "experiment.methods")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("seeds are listed twice", "experiment.seeds")
    if cfg.parallel < 1:
        raise ConfigError("must be >= 1", "experiment.parallel")
    if cfg.get("dataset", "source") not in DATA_SOURCES:
        raise ConfigError(f"expected one of {', '.join(DATA_SOURCES)}", "dataset.source")
    if cfg.get("dataset", "source") != "synthetic" and not cfg.get("dataset", "path"):
        raise ConfigError("this source needs a path", "dataset.path")
    if not cfg.forgetting_labels():
        raise ConfigError("at least one forgetting label is required", "task.forgetting_labels")
    cfg.synth_config()
    cfg.engine_config(cfg.seeds[0])
    cfg.pretrain_config(cfg.seeds[0])


def load_config(filename: str | None, environ: dict[str, str] | None = None) -> ExperimentConfig:
    """
    read a config file; None gives the all-defaults configuration.
    """
    text = ""
    if filename:
        try:
            with open(filename, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"cannot read config {filename}: {e}") from e
    cfg = parse_config(text, environ)
    logger.debug("loaded config %s", filename or "<defaults>")
    return cfg
