"""The ``fw`` command line.

Examples::

    fw run --config exterior.ini --schedule fixed:2,fixed:4,logadaptive --T 10000 --out runs/exterior
    fw certify --config exterior.ini --mode strong --r 0.5
    fw lemma --schedule logadaptive --S 5 --eps 1 --t 10000
    fw lemma --sweep

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

import argparse
import logging
import sys
from typing import Optional

from openloop_fw import __version__, exceptions
from openloop_fw.harness import ExperimentConfig, certify_experiment, run_experiment
from openloop_fw.schedules import (
    Schedule,
    classic_product_check,
    cumulative_product_check,
    lemma_sweep,
    parse_schedule,
)

logger = logging.getLogger("openloop_fw.cli")

SWEEP_SCHEDULES = ("fixed:2", "fixed:4", "fixed:7", "logadaptive")


class ArgumentParser(argparse.ArgumentParser):
    """Reports bad arguments as ``UsageError`` so they map to exit code 1."""

    def error(self, message):
        raise exceptions.UsageError(detail=f"{self.prog}: {message}")


def _out(line: str):
    sys.stdout.write(line + "\n")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="fw",
        description="Frank-Wolfe with open-loop step-sizes: experiments, growth certificates and bound checks.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__.split("Examples::", 1)[1],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    run = commands.add_parser("run", help="Run every schedule on one instance and write CSV traces.")
    run.add_argument("--config", required=True, help="INI file with an [experiment] section")
    run.add_argument("--schedule", dest="schedules", help="Comma-separated schedule specs, e.g. fixed:2,logadaptive")
    run.add_argument("--T", type=int, help="Number of iterations")
    run.add_argument("--out", help="Output directory")
    run.add_argument("--seed", type=int, help="Instance seed")

    certify = commands.add_parser("certify", help="Estimate the growth constant M of the configured instance.")
    certify.add_argument("--config", required=True)
    certify.add_argument("--mode", choices=["strong", "weak"], default="strong")
    certify.add_argument("--r", type=float, required=True)
    certify.add_argument("--samples", type=int, default=200)
    certify.add_argument("--eta-grid", type=int, default=None)
    certify.add_argument("--S", type=int, default=8, help="First iteration covered by the rate envelope")
    certify.add_argument("--eps", type=float, default=1.0, help="Envelope epsilon, in ]0, g(S)[")
    certify.add_argument("--out", help="Output directory")
    certify.add_argument("--seed", type=int)

    lemma = commands.add_parser("lemma", help="Check the cumulative-product bound.")
    lemma.add_argument("--schedule", default="logadaptive")
    lemma.add_argument("--S", type=int, default=1)
    lemma.add_argument("--eps", type=float, default=1.0)
    lemma.add_argument("--t", type=int, default=10000)
    lemma.add_argument("--classic", action="store_true", help="Also evaluate the older fixed-l bound")
    lemma.add_argument("--sweep", action="store_true", help="Sweep fixed:2, fixed:4, fixed:7 and logadaptive over S <= 20")
    return parser


def _config(args) -> ExperimentConfig:
    return ExperimentConfig.from_file(args.config).with_overrides(
        schedules=getattr(args, "schedules", None),
        T=getattr(args, "T", None),
        out=args.out,
        seed=args.seed,
    )


def cmd_run(args) -> int:
    config = _config(args)
    manifest = run_experiment(config)
    for output in manifest["outputs"]:
        _out(f"{config.out}/{output['path']}")
    _out(f"{config.out}/manifest.json")
    return 0


def cmd_certify(args) -> int:
    config = _config(args)
    result = certify_experiment(
        config, args.mode, args.r, n_samples=args.samples, n_eta=args.eta_grid, S=args.S, epsilon=args.eps
    )
    certificate = result.certificate
    point, eta = certificate.max_ratio_location
    _out(
        f"mode={certificate.mode} r={certificate.r:g} M_hat={certificate.M_hat:.17g} "
        f"samples={certificate.samples} violations={certificate.violations_at_M_hat} "
        f"argmax=(point {point}, eta {eta:.6g})"
    )
    if result.bound is not None:
        _out(f"bound measure={result.bound.measure} checked={result.bound.checked} violations={len(result.bound.violations)}")
    return 0


def cmd_lemma(args) -> int:
    if args.sweep:
        sweep = lemma_sweep([parse_schedule(spec) for spec in SWEEP_SCHEDULES])
        _out(f"checks={len(sweep.checks)} violations={len(sweep.violations)}")
        for check in sweep.violations:
            _out(f"violation schedule={check.schedule} S={check.S} eps={check.epsilon:g} t={check.t} log_lhs={check.log_lhs:.17g} log_rhs={check.log_rhs:.17g}")
        return 0 if sweep.ok else exceptions.EXIT_NUMERICAL

    schedule: Schedule = parse_schedule(args.schedule)
    check = cumulative_product_check(schedule, args.S, args.eps, args.t)
    _out(f"lhs={check.lhs:.17g} rhs={check.rhs:.17g} satisfied={check.satisfied}")
    if args.classic:
        classic = classic_product_check(schedule, args.S, args.eps, args.t)
        _out(f"classic_rhs={classic.rhs:.17g} satisfied={classic.satisfied}")
    return 0 if check.satisfied else exceptions.EXIT_NUMERICAL


COMMANDS = {"run": cmd_run, "certify": cmd_certify, "lemma": cmd_lemma}


def main(argv: Optional[list] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except exceptions.FrankWolfeError as exc:
        sys.stderr.write(f"{exc}\n")
        return exc.exit_code
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except exceptions.FrankWolfeError as exc:
        logger.error("%s", exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
