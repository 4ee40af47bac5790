import argparse
import logging
import sys

import pandas as pd

from unlearnlab import pipeline, utils
from unlearnlab.checkpoint import load_checkpoint, save_checkpoint
from unlearnlab.config import format_schema, load_config
from unlearnlab.engines import ENGINES
from unlearnlab.errors import UnlearnLabError
from unlearnlab.evalkit import aggregate_reports, read_reports_csv, write_reports_csv
from unlearnlab.taxonomy import generate_synthetic, write_dataset_table

logger = logging.getLogger(__name__)


def gen_data(args):
    """
    generate the configured synthetic dataset as a dataset table.
    """
    cfg = load_config(args.config)
    dataset, taxonomy = generate_synthetic(cfg.synth_config())
    write_dataset_table(args.output, dataset, taxonomy)


def pretrain_model(args):
    cfg = load_config(args.config)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    data = pipeline.load_data(cfg)
    params = pipeline.pretrain_model(cfg, data, seed)
    output = args.output or pipeline.run_dir(cfg, f"seed-{seed}", "pretrained.json")
    save_checkpoint(output, params)
    logger.info("wrote checkpoint %s", output)


def unlearn(args):
    """
    run one method on the configured task.
    """
    cfg = load_config(args.config)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    pretrained = load_checkpoint(args.checkpoint) if args.checkpoint else None
    frame = pipeline.unlearn_once(cfg, args.method, seed, pretrained)
    print(frame.to_string(index=False))


def evaluate(args):
    """
    recompute the report of a saved model.
    """
    cfg = load_config(args.config)
    frame = pipeline.evaluate_checkpoint(cfg, args.checkpoint, args.seed)
    if args.output:
        write_reports_csv(args.output, frame)
    print(frame.to_string(index=False))


def sweep(args):
    cfg = load_config(args.config)
    frame = pipeline.sweep(cfg, args.parallel)
    print(frame.to_string(index=False))


def report(args):
    """
    aggregate report CSVs into mean/std per scenario and method.
    """
    frame = pd.concat([read_reports_csv(f) for f in args.src], ignore_index=True)
    table = aggregate_reports(frame)
    if args.output:
        utils.write_file(args.output, table.to_csv(index=False))
        logger.info("wrote summary %s", args.output)
    print(table.to_string(index=False))


def schema(args):
    print(format_schema(), end="")


def main(argv: list[str] | None = None) -> int:
    """
    command line tool entry.
    """
    logging.basicConfig(level=logging.INFO)

    argparser = argparse.ArgumentParser(prog="unlearnlab")
    argparser.add_argument("--verbose", "-v", action="store_true", help="verbose output")
    subparsers = argparser.add_subparsers(
        title="subcommands", dest="command", help="subcommand help"
    )

    def config_arg(parser):
        parser.add_argument("--config", "-c", help="experiment config file")

    gen_parser = subparsers.add_parser("gen-data", help="generate a synthetic dataset table")
    config_arg(gen_parser)
    gen_parser.add_argument("--output", "-o", required=True, help="dataset table file")
    gen_parser.set_defaults(func=gen_data)

    pretrain_parser = subparsers.add_parser("pretrain", help="train the original model")
    config_arg(pretrain_parser)
    pretrain_parser.add_argument("--seed", type=int, help="run seed, default first config seed")
    pretrain_parser.add_argument("--output", "-o", help="checkpoint file")
    pretrain_parser.set_defaults(func=pretrain_model)

    unlearn_parser = subparsers.add_parser("unlearn", help="run one unlearning method")
    config_arg(unlearn_parser)
    unlearn_parser.add_argument("--method", "-m", required=True, choices=sorted(ENGINES))
    unlearn_parser.add_argument("--seed", type=int, help="run seed, default first config seed")
    unlearn_parser.add_argument("--checkpoint", help="pretrained checkpoint, trained when absent")
    unlearn_parser.set_defaults(func=unlearn)

    evaluate_parser = subparsers.add_parser("evaluate", help="evaluate a checkpoint")
    config_arg(evaluate_parser)
    evaluate_parser.add_argument("checkpoint", help="checkpoint file")
    evaluate_parser.add_argument("--seed", type=int, help="seed recorded in the report")
    evaluate_parser.add_argument("--output", "-o", help="report csv file")
    evaluate_parser.set_defaults(func=evaluate)

    sweep_parser = subparsers.add_parser("sweep", help="run methods x seeds")
    config_arg(sweep_parser)
    sweep_parser.add_argument("--parallel", "-j", type=int, help="worker threads")
    sweep_parser.set_defaults(func=sweep)

    report_parser = subparsers.add_parser("report", help="aggregate report csv files")
    report_parser.add_argument("src", nargs="+", help="report csv files")
    report_parser.add_argument("--output", "-o", help="summary csv file")
    report_parser.set_defaults(func=report)

    schema_parser = subparsers.add_parser("schema", help="print every config key")
    schema_parser.set_defaults(func=schema)

    try:
        args = argparser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    if args.verbose:
        logging.getLogger("unlearnlab").setLevel(logging.DEBUG)
    if not args.command:
        argparser.print_help()
        return 0
    try:
        args.func(args)
    except UnlearnLabError as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0
