#!/usr/bin/env python3

import argparse
import logging
import sys

from dotenv import load_dotenv

from configure_clean_logging import configure_clean_logging
from src.config import RunConfig, load_settings, validate_settings
from src.errors import EXIT_ESTIMATION_FAILED, EXIT_OK, EXIT_USAGE, EXIT_VERIFICATION_FAILED, VmmError
from src.numerics import set_jitter_levels
from src.services import EstimationService, SimulationService, VerificationService
from src.services.report_writer import write_json

load_dotenv()

logger = logging.getLogger(__name__)

SUITES = ('lemma1', 'lemma6', 'lemma7', 'variational-identity', 'gradients', 'kstep', 'efficiency',
          'coverage', 'neural-dominance', 'consistency', 'all')


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the package's usage code"""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vmm", description="Variational method of moments estimators")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    estimate = commands.add_parser("estimate", help="Estimate theta on a CSV dataset")
    estimate.add_argument("--config", help="JSON run configuration")
    estimate.add_argument("--data", help="CSV file with the columns named in problem.layout")
    estimate.add_argument("--out", help="JSON report path")
    estimate.add_argument("--residuals", help="Optional CSV of fitted residuals")
    estimate.add_argument("--seed", type=int)
    estimate.add_argument("--estimator", choices=("owgmm", "kernel-vmm", "kernel-iv", "neural-vmm"))
    estimate.add_argument("--k", type=int, help="Number of re-weighting stages")
    estimate.add_argument("--alpha-scale", type=float, help="c in alpha_n = c * n^-0.4")
    estimate.add_argument("--lam", type=float, help="Kernel IV ridge")
    estimate.add_argument("--level", type=float, help="Confidence level of the Wald intervals")

    simulate = commands.add_parser("simulate", help="Run a Monte Carlo experiment")
    simulate.add_argument("--config", help="JSON run configuration")
    simulate.add_argument("--out-dir", help="Directory for reps.csv, summary.json, timing.json (default: the config's out, then results)")
    simulate.add_argument("--reps", type=int)
    simulate.add_argument("--n", type=int)
    simulate.add_argument("--parallel", dest="parallel", action="store_true", default=None)
    simulate.add_argument("--serial", dest="parallel", action="store_false")
    simulate.add_argument("--seed", type=int)

    verify = commands.add_parser("verify", help="Run verification suites")
    verify.add_argument("suite", help=f"One of: {', '.join(SUITES)}")
    verify.add_argument("--seed", type=int)
    verify.add_argument("--reps", type=int, help="Override Monte Carlo replication counts")
    verify.add_argument("--out", help="JSON file for per-check results")
    verify.add_argument("--serial", action="store_true", help="Run Monte Carlo replications in-process")
    return parser


def _overrides(args) -> dict:
    if args.command == "estimate":
        return {
            'seed': args.seed, 'data': args.data, 'out': args.out, 'residuals': args.residuals,
            'estimator.name': args.estimator, 'estimator.k': args.k,
            'estimator.alpha_scale': args.alpha_scale, 'estimator.lam': args.lam,
            'inference.level': args.level,
        }
    return {
        'seed': args.seed, 'out': args.out_dir, 'simulation.reps': args.reps,
        'simulation.n': args.n, 'simulation.parallel': args.parallel,
    }


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    settings = load_settings()
    configure_clean_logging(settings['logging']['level'], settings['logging']['file'])
    if not validate_settings(settings):
        return EXIT_USAGE
    set_jitter_levels(settings['numerics']['jitter_levels'])
    default_seed = settings['runtime']['default_seed']

    try:
        if args.command == "verify":
            if args.suite not in SUITES:
                logger.error(f"❌ Unknown suite '{args.suite}'. Available: {', '.join(SUITES)}")
                return EXIT_USAGE
            service = VerificationService(default_seed if args.seed is None else args.seed, args.reps,
                                          parallel=not args.serial, max_workers=settings['runtime']['max_workers'])
            report = service.run(args.suite)
            if args.out:
                write_json(args.out, report)
            return EXIT_OK if report['passed'] else EXIT_VERIFICATION_FAILED

        config = RunConfig.load(args.config, args.command, default_seed).with_overrides(_overrides(args))
        if args.command == "estimate":
            EstimationService(config).run()
        else:
            SimulationService(config, max_workers=settings['runtime']['max_workers']).run()
        return EXIT_OK

    except VmmError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("👋 Interrupted")
        return EXIT_ESTIMATION_FAILED
    except Exception as e:
        logger.exception(f"❌ Unexpected failure: {e}")
        return EXIT_ESTIMATION_FAILED


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
