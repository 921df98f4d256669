"""
Command-line entry point.

    loopsoup-lab onepoint --config onepoint.json --seed 3 --out runs/onepoint
    loopsoup-lab alpha build --config table.json
    loopsoup-lab suite --out runs/suite

Exit status is 0 exactly when every evaluated criterion passed.
"""
import argparse
import sys
from typing import Optional, Sequence

from ..config import LOG_LEVEL
from ..errors import ConfigurationError
from ..logging import get_experiment_logger, setup_structured_logging
from . import io
from .models import EXPERIMENT_IDS, ExperimentConfig, SuiteConfig
from .pipeline import run_experiment, run_suite

logger = get_experiment_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopsoup-lab", description="Brownian loop soup Monte Carlo lab")
    parser.add_argument("--log-level", default=LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")

    for name in EXPERIMENT_IDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        if name == "alpha":
            p.add_argument("action", nargs="?", choices=["run", "build", "check"], default=None)
        common(p)
    common(sub.add_parser("suite", help="run every experiment plus the determinism rerun"))
    return parser


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    config = io.load_experiment_config(args.config) if args.config else ExperimentConfig(experiment=args.command)
    if config.experiment != args.command:
        raise ConfigurationError(f"config is for {config.experiment!r}, not {args.command!r}")
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if getattr(args, "action", None):
        update["options"] = config.options.model_copy(update={"action": args.action})
    return config.model_copy(update=update) if update else config


def _suite_config(args: argparse.Namespace) -> SuiteConfig:
    suite = io.load_suite_config(args.config) if args.config else SuiteConfig()
    if args.seed is not None:
        suite = SuiteConfig(seed=args.seed, output_dir=suite.output_dir,
                            determinism_experiment=suite.determinism_experiment,
                            experiments=[c.model_copy(update={"seed": args.seed}) for c in suite.experiments])
    return suite


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_structured_logging(args.log_level.upper())
    try:
        if args.command == "suite":
            manifest = run_suite(_suite_config(args), args.out)
        else:
            manifest = run_experiment(_experiment_config(args), args.out)
    except ConfigurationError as e:
        logger.error(str(e))
        return 2
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    sys.exit(main())
