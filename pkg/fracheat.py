"""Command-line front end: fracheat run | list | check."""

import argparse
import logging
import os
import sys

from artifacts import read_json
from config import load_config
from errors import AcceptanceFailure, ComputeError, ConfigError
from experiments import list_experiments, run_experiment

logger = logging.getLogger("fracheat")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPUTE = 3
EXIT_ACCEPTANCE = 4


def _print_checks(report):
    for check in report["checks"]:
        mark = "✓" if check["passed"] else "✗"
        print(f"{mark} {check['name']}: {float(check['value']):.6g} (threshold {float(check['threshold']):.6g}) [{check['target']}]")


def check_report(path):
    """Re-read a report.json; raises AcceptanceFailure listing the failed checks"""
    try:
        report = read_json(path)
    except (OSError, ValueError) as err:
        raise ConfigError(str(path), f"cannot read report: {err}") from err
    if not isinstance(report, dict) or "checks" not in report:
        raise ConfigError(str(path), "not a fracheat report")
    _print_checks(report)
    failed = [c["name"] for c in report["checks"] if not c["passed"]]
    if failed:
        raise AcceptanceFailure(f"{len(failed)} of {len(report['checks'])} checks failed: {', '.join(failed)}")
    return report


def cmd_run(args):
    cfg = load_config(args.config)
    progress = not args.quiet and os.environ.get("FRACHEAT_PROGRESS", "1") != "0"
    report, out_dir = run_experiment(cfg, output_dir=args.output, threads=args.threads, progress=progress)
    _print_checks(report)
    passed = sum(c["passed"] for c in report["checks"])
    print(f"✓ Wrote {cfg.kind} artifacts to {out_dir} ({passed}/{len(report['checks'])} checks passed)")
    if not report["passed"]:
        raise AcceptanceFailure(f"{cfg.kind}: {len(report['checks']) - passed} checks failed")


def cmd_list(args):
    for kind, description, target in list_experiments():
        print(f"{kind:<18} {description}")
        print(f"{'':<18} tests: {target}")


def cmd_check(args):
    report = check_report(args.report)
    print(f"✓ All {len(report['checks'])} checks passed for {report['experiment']}")


def build_parser():
    parser = argparse.ArgumentParser(prog="fracheat", description="Fractional stochastic heat equation experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log numerical diagnostics")
    parser.add_argument("-q", "--quiet", action="store_true", help="Only warnings, no progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one experiment from a TOML config")
    run.add_argument("config", help="Path to the experiment config")
    run.add_argument("--output", default=None, help="Output directory (default: [output] directory from the config)")
    run.add_argument("--threads", type=int, default=None, help="Replicate worker threads (default: FRACHEAT_THREADS or 1)")
    run.set_defaults(func=cmd_run)

    lst = sub.add_parser("list", help="List experiment kinds")
    lst.set_defaults(func=cmd_list)

    chk = sub.add_parser("check", help="Re-check a report.json")
    chk.add_argument("report", help="Path to report.json")
    chk.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as err:
        logger.error("config error: %s", err)
        return EXIT_CONFIG
    except ComputeError as err:
        logger.error("compute error: %s", err)
        return EXIT_COMPUTE
    except AcceptanceFailure as err:
        logger.error("%s", err)
        return EXIT_ACCEPTANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
