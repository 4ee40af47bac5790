"""
Experiment orchestration: data loading, pretraining, single runs, seeded
sweeps and run manifests.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata

import pandas as pd

from unlearnlab import utils
from unlearnlab.checkpoint import load_checkpoint, save_checkpoint
from unlearnlab.cifar import load_cifar_binary
from unlearnlab.config import ExperimentConfig
from unlearnlab.diffnet import ClassifierParams
from unlearnlab.dynamics import class_accuracy_drop, write_class_drop_csv, write_trace_csv
from unlearnlab.engines import get_engine, pretrain, retrain_reference
from unlearnlab.errors import ConfigError, DomainError, FormatError
from unlearnlab.evalkit import (
    RETRAINED,
    MetricsReport,
    compute_metrics,
    fill_gaps,
    reports_frame,
    write_reports_csv,
    write_reports_json,
)
from unlearnlab.taxonomy import (
    Dataset,
    LabelTaxonomy,
    generate_synthetic,
    read_dataset_table,
    split_dataset,
)
from unlearnlab.tasks import UnlearnTask, build_task, write_task

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def tool_version() -> str:
    try:
        return metadata.version("unlearnlab")
    except metadata.PackageNotFoundError:
        return "0.0.0"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True, eq=False)
class ExperimentData:
    train: Dataset
    test: Dataset
    taxonomy: LabelTaxonomy


@dataclass(frozen=True)
class RunResult:
    method: str
    seed: int
    report: MetricsReport
    files: tuple[str, ...]
    notes: tuple[str, ...] = ()


@dataclass
class RunManifest:
    config_hash: str
    version: str
    started: str
    finished: str = ""
    files: list[str] = field(default_factory=list)
    knobs: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)


def load_data(cfg: ExperimentConfig) -> ExperimentData:
    """
    load or generate the dataset and split off the test part.
    """
    source = cfg.get("dataset", "source")
    paths = cfg.get("dataset", "path")
    test_paths = cfg.get("dataset", "test_path")
    test = None
    match source:
        case "synthetic":
            dataset, taxonomy = generate_synthetic(cfg.synth_config())
        case "table":
            dataset, taxonomy = read_dataset_table(paths[0])
            if test_paths:
                test, test_taxonomy = read_dataset_table(test_paths[0])
        case _:
            dataset, taxonomy = load_cifar_binary(paths, source)
            if test_paths:
                test, test_taxonomy = load_cifar_binary(test_paths, source)
    if test is not None:
        if test_taxonomy != taxonomy:
            raise FormatError("test data is labelled with another taxonomy")
        return ExperimentData(dataset, test, taxonomy)
    train, test = split_dataset(
        dataset, cfg.get("dataset", "test_fraction"), cfg.get("dataset", "split_seed")
    )
    logger.info("split %d samples into %d train / %d test", len(dataset), len(train), len(test))
    return ExperimentData(train, test, taxonomy)


def make_task(cfg: ExperimentConfig, data: ExperimentData) -> UnlearnTask:
    """
    build the configured task; unknown labels are reported against their key.
    """
    spec = cfg.scenario_spec()
    labels = {
        "task.forgetting_labels": (cfg.forgetting_labels(), spec.data_level),
        "task.target_labels": (cfg.target_labels() or [], spec.target_level),
    }
    for key, (names, level) in labels.items():
        for name in names:
            try:
                data.taxonomy.label_id(name, level)
            except DomainError as e:
                raise ConfigError(str(e), key) from e
    return build_task(
        data.train, data.taxonomy, spec, cfg.forgetting_labels(), cfg.target_labels()
    )


def pretrain_model(cfg: ExperimentConfig, data: ExperimentData, seed: int) -> ClassifierParams:
    return pretrain(
        data.train,
        data.taxonomy,
        cfg.scenario_spec().model_level,
        cfg.pretrain_config(seed),
        cfg.hidden_dims,
    )


def run_dir(cfg: ExperimentConfig, *parts) -> str:
    return os.path.join(cfg.output_dir, cfg.name, *[str(p) for p in parts])


def run_retrained(
    cfg: ExperimentConfig, data: ExperimentData, task: UnlearnTask, seed: int
) -> RunResult:
    """
    retrain from scratch on the retaining data; its report is the Gap reference.
    """
    out = run_dir(cfg, f"seed-{seed}", RETRAINED)
    watch = utils.Stopwatch().start()
    params = retrain_reference(
        task, data.train, data.taxonomy, cfg.pretrain_config(seed), cfg.hidden_dims
    )
    rte = watch.stop()
    report = compute_metrics(
        params, task, data.train, data.taxonomy, data.test, rte=rte, method=RETRAINED, seed=seed
    )
    checkpoint = os.path.join(out, "checkpoint.json")
    save_checkpoint(checkpoint, params)
    return RunResult(RETRAINED, seed, report, (checkpoint,))


def run_method(
    cfg: ExperimentConfig,
    data: ExperimentData,
    task: UnlearnTask,
    pretrained: ClassifierParams,
    method: str,
    seed: int,
) -> RunResult:
    """
    run one engine from `pretrained`, evaluate it and write its files.
    """
    engine = get_engine(method)
    outcome = engine(task, data.train, data.taxonomy, pretrained, cfg.engine_config(seed))
    report = compute_metrics(
        outcome.params,
        task,
        data.train,
        data.taxonomy,
        data.test,
        rte=outcome.rte_seconds,
        method=method,
        seed=seed,
    )
    out = run_dir(cfg, f"seed-{seed}", method)
    checkpoint = os.path.join(out, "checkpoint.json")
    trace = os.path.join(out, "trace.csv")
    drops = os.path.join(out, "class_drops.csv")
    save_checkpoint(checkpoint, outcome.params)
    write_trace_csv(trace, outcome.trace)
    last = outcome.trace.epochs[-1]
    t1 = cfg.get("schedule", "t1")
    write_class_drop_csv(
        drops,
        class_accuracy_drop(outcome.trace, 0, min(t1, last) if t1 > 0 else last),
        data.taxonomy.names(task.spec.data_level),
    )
    logger.info(
        "%s seed %d: UA %.2f RA %.2f TA %.2f MIA %.2f (%.2fs)",
        method,
        seed,
        report.ua,
        report.ra,
        report.ta,
        report.mia,
        report.rte_seconds,
    )
    return RunResult(method, seed, report, (checkpoint, trace, drops), outcome.notes)


def _knobs(cfg: ExperimentConfig) -> dict:
    return {
        "schedule.mode": cfg.get("schedule", "mode"),
        "engine.uf_mode": cfg.get("engine", "uf_mode"),
        "tau.granularity": cfg.get("tau", "granularity"),
    }


def write_manifest(directory: str, manifest: RunManifest) -> str:
    filename = os.path.join(directory, MANIFEST_NAME)
    utils.write_file(filename, json.dumps(manifest.__dict__, indent=1))
    return filename


def _finish(cfg: ExperimentConfig, manifest: RunManifest, results: list[RunResult], extra):
    for result in results:
        manifest.files.extend(result.files)
        manifest.notes.extend(f"{result.method}/{result.seed}: {n}" for n in result.notes)
    manifest.files.extend(extra)
    manifest.finished = _now()
    return write_manifest(run_dir(cfg), manifest)


def _new_manifest(cfg: ExperimentConfig) -> RunManifest:
    return RunManifest(
        config_hash=utils.text_hash(cfg.normalized_text()),
        version=tool_version(),
        started=_now(),
        knobs=_knobs(cfg),
    )


def _write_reports(cfg: ExperimentConfig, results: list[RunResult], stem: str) -> tuple:
    frame = fill_gaps(reports_frame([r.report for r in results]))
    csv_file = run_dir(cfg, f"{stem}.csv")
    json_file = run_dir(cfg, f"{stem}.json")
    write_reports_csv(csv_file, frame)
    write_reports_json(json_file, frame)
    return frame, (csv_file, json_file)


def unlearn_once(
    cfg: ExperimentConfig,
    method: str,
    seed: int,
    pretrained: ClassifierParams | None = None,
) -> pd.DataFrame:
    """
    run one method on the configured task, with its retrained reference.
    """
    manifest = _new_manifest(cfg)
    data = load_data(cfg)
    task = make_task(cfg, data)
    task_file = run_dir(cfg, "task.json")
    write_task(task_file, task)
    if pretrained is None:
        pretrained = pretrain_model(cfg, data, seed)
    results = [
        run_retrained(cfg, data, task, seed),
        run_method(cfg, data, task, pretrained, method, seed),
    ]
    frame, files = _write_reports(cfg, results, f"report-{method}-{seed}")
    _finish(cfg, manifest, results, (task_file, *files))
    return frame


def evaluate_checkpoint(
    cfg: ExperimentConfig, filename: str, seed: int | None = None
) -> pd.DataFrame:
    """
    recompute the report of a saved model on the configured task.
    """
    params = load_checkpoint(filename)
    data = load_data(cfg)
    task = make_task(cfg, data)
    report = compute_metrics(params, task, data.train, data.taxonomy, data.test, seed=seed)
    return reports_frame([report])


def sweep(cfg: ExperimentConfig, parallel: int | None = None) -> pd.DataFrame:
    """
    run every method for every seed plus a retrained reference per seed and
    write the combined report.

    Parameters
    ----------
    cfg : ExperimentConfig
        experiment configuration
    parallel : int, optional
        worker threads, overrides `experiment.parallel`

    Returns
    -------
    pd.DataFrame
        report rows ordered by seed, then retrained, then methods in
        configuration order, with the Gap column filled
    """
    workers = parallel or cfg.parallel
    if workers < 1:
        raise ConfigError("must be >= 1", "experiment.parallel")
    manifest = _new_manifest(cfg)
    data = load_data(cfg)
    task = make_task(cfg, data)
    task_file = run_dir(cfg, "task.json")
    write_task(task_file, task)

    pretrained = {}
    extra = [task_file]
    for seed in cfg.seeds:
        pretrained[seed] = pretrain_model(cfg, data, seed)
        path = run_dir(cfg, f"seed-{seed}", "pretrained.json")
        save_checkpoint(path, pretrained[seed])
        extra.append(path)

    jobs = [(seed, RETRAINED) for seed in cfg.seeds]
    jobs += [(seed, method) for seed in cfg.seeds for method in cfg.methods]

    def run(job):
        seed, method = job
        if method == RETRAINED:
            return run_retrained(cfg, data, task, seed)
        return run_method(cfg, data, task, pretrained[seed], method, seed)

    results: list[RunResult] = []
    if workers == 1:
        for i, job in enumerate(jobs):
            logger.info("run %d/%d: %s seed %d", i + 1, len(jobs), job[1], job[0])
            results.append(run(job))
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            for i, result in enumerate(executor.map(run, jobs)):
                logger.info(
                    "run %d/%d: %s seed %d done", i + 1, len(jobs), result.method, result.seed
                )
                results.append(result)

    order = {m: i for i, m in enumerate([RETRAINED, *cfg.methods])}
    results.sort(key=lambda r: (cfg.seeds.index(r.seed), order[r.method]))
    frame, files = _write_reports(cfg, results, "sweep")
    _finish(cfg, manifest, results, (*extra, *files))
    return frame
