#!/usr/bin/env python3
"""
Runs variance reduction experiments on terminating discrete-event simulation
models and reports whether common random numbers, antithetic variates or
control variates reduced the variance of each performance measure.

An experiment file names a model file, the number of replications, the
groups to run and the measures to analyze. Each group runs its replications
with its own seed manifests, and every manifest is written next to the
report so any replication can be rerun exactly.

Exit status is 0 on success, 2 when a model or experiment file is invalid and
3 when the statistics cannot be computed (zero-variance groups, measures
without observations).
"""

import argparse
import logging
import os
import sys

from desvar import __version__ as VERSION
from desvar import config
from desvar.errors import DesvarError
from desvar.experiment import (
    compare,
    default_jobs,
    load_spec,
    run_experiment,
    validate_mm1,
)
from desvar.logging import logger
from desvar.models import load_model
from desvar.report import (
    ExperimentReport,
    ReportFormat,
    render_comparison,
    render_report,
    render_scoreboard,
    render_validation,
    summarize,
    write_outputs,
)
from desvar.streams import VrtScenario, manifest_for_scenario

MM1_MODEL = "mm1.cfg"


def run(args):
    """Run an experiment, write every output and print the selected format"""
    spec = load_spec(args.spec, args.base_seed)
    report, runs = run_experiment(spec, args.jobs)
    measures = spec.model.measure_names()
    written = write_outputs(args.out, report, runs, measures)
    logger.debug(written)
    sys.stdout.write(render_report(report, args.format).decode("utf-8"))
    return 0


def run_compare(args):
    spec = load_spec(args.spec, args.base_seed)
    if args.replications:
        spec.replications = args.replications
    sys.stdout.write(render_comparison(compare(spec, args.jobs)))
    return 0


def run_validate_mm1(args):
    model = load_model(args.model)
    checks = validate_mm1(model, args.replications, args.base_seed, args.jobs)
    sys.stdout.write(render_validation(checks))
    failed = [c.name for c in checks if not c.passed]
    if failed:
        logger.error("M/M/1 validation failed: %s", ", ".join(failed))
        return 1
    return 0


def run_print_manifest(args):
    spec = load_spec(args.spec, args.base_seed)
    if not 0 <= args.rep < spec.replications:
        logger.warning(
            "replication %d is outside the experiment's %d replications",
            args.rep,
            spec.replications,
        )
    manifest = manifest_for_scenario(
        spec.model.sources, args.group, spec.base_seed, args.rep
    )
    sys.stdout.write(manifest.to_text())
    return 0


def run_summarize(args):
    reports = []
    for path in args.reports:
        if os.path.isdir(path):
            path = os.path.join(path, config.REPORT_JSON)
        reports.append(ExperimentReport.load(path))
    sys.stdout.write(render_scoreboard(summarize(reports)))
    return 0


COMMANDS = {
    "run": run,
    "compare": run_compare,
    "validate-mm1": run_validate_mm1,
    "print-manifest": run_print_manifest,
    "summarize": run_summarize,
}


def build_parser():
    app_description = f"""Variance reduction experiments for discrete-event simulation v{VERSION}"""
    app_epilog = """Exit status: 0 success, 2 invalid input, 3 degenerate statistics"""
    parser = argparse.ArgumentParser(
        prog="desvar",
        description=app_description,
        epilog=app_epilog,
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Print more debug information"
    )
    parser.add_argument(
        "--version", action="store_true", help="Print version information and exit"
    )
    subparsers = parser.add_subparsers(dest="command")

    def common(sub, spec=True):
        if spec:
            sub.add_argument("--spec", required=True, help="Experiment file")
        sub.add_argument(
            "--base-seed", type=int, default=None, help="Override the experiment's base seed"
        )
        sub.add_argument(
            "-j",
            "--jobs",
            type=int,
            default=default_jobs(),
            help="Worker processes, defaults to $DESVAR_JOBS",
        )

    sub = subparsers.add_parser("run", help="Run the four-group experiment")
    common(sub)
    sub.add_argument("-o", "--out", default="desvar-out", help="Output directory")
    sub.add_argument(
        "-f",
        "--format",
        type=ReportFormat,
        choices=list(ReportFormat),
        default=ReportFormat.Table,
        help="Format printed to stdout; every format is written to --out",
    )

    sub = subparsers.add_parser(
        "compare", help="Paired difference of two configurations, CRN vs independent"
    )
    common(sub)
    sub.add_argument("-n", "--replications", type=int, help="Override replication count")

    sub = subparsers.add_parser("validate-mm1", help="Check the kernel on an M/M/1 queue")
    common(sub, spec=False)
    sub.add_argument("--model", default=MM1_MODEL, help="Single queue model file")
    sub.add_argument(
        "-n",
        "--replications",
        type=int,
        default=config.DEFAULT_REPLICATIONS,
        help="Replications",
    )

    sub = subparsers.add_parser("print-manifest", help="Print one replication's seeds")
    common(sub)
    sub.add_argument(
        "--group",
        type=VrtScenario,
        choices=list(VrtScenario),
        default=VrtScenario.CRN,
        help="Scenario group",
    )
    sub.add_argument("--rep", type=int, default=0, help="Zero based replication")

    sub = subparsers.add_parser(
        "summarize", help="Scoreboard of techniques across report.json files"
    )
    sub.add_argument("reports", nargs="+", help="report.json files or output directories")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.version:
        print(VERSION)
        sys.exit()

    if args.verbose:
        logger.setLevel(logging.DEBUG)

    logger.debug(args)

    if not args.command:
        parser.print_help()
        sys.exit(2)
    if getattr(args, "base_seed", None) is None and args.command == "validate-mm1":
        args.base_seed = config.DEFAULT_BASE_SEED

    ret = 1
    try:
        ret = COMMANDS[args.command](args)
    except DesvarError as ex:
        logger.error("%s", ex)
        ret = ex.exit_code
    except BaseException as ex:
        logger.exception(ex)
    sys.exit(ret)
