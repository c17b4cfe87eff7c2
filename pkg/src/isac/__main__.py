"""CLI entry point for the ISAC CSI toolkit."""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from isac.config import ExperimentConfig
from isac.experiments import (
    cmd_ber,
    cmd_eval,
    cmd_generate,
    cmd_report,
    cmd_sense,
    cmd_train,
)
from isac.loaders import load_experiment_config
from isac.validation import format_report, run_validation

# Configure logging
logging.basicConfig(
    level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

COMMANDS = {
    "generate": (cmd_generate, "Simulate train, eval and test datasets"),
    "train": (cmd_train, "Train the CSI enhancer and save a checkpoint"),
    "eval": (cmd_eval, "Write NMSE per SNR for every estimator"),
    "sense": (cmd_sense, "Write AoA and range MSE per SNR"),
    "ber": (cmd_ber, "Write BER per SNR for every constellation and CSI source"),
    "report": (cmd_report, "Collect metric CSVs into report.csv and report.xlsx"),
}


# %%
def validate(cfg: ExperimentConfig, quick: bool) -> bool:
    """Run the acceptance checks and print their report."""
    results = run_validation(cfg, quick=quick)
    print(format_report(results))
    failed = [result["name"] for result in results if not result["passed"]]
    if failed:
        names = ", ".join(failed)
        logger.error(f"✗ {len(failed)} of {len(results)} checks failed: {names}")
        return False
    logger.info(f"✓ All {len(results)} checks passed")
    return True


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per pipeline step."""
    parser = argparse.ArgumentParser(
        prog="isac",
        description="ISAC CSI toolkit - simulate, enhance and evaluate MIMO-OFDM CSI",
    )
    parser.add_argument(
        "--verbose", action="store_true", help="Log debug messages as well"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, (_, help_text) in COMMANDS.items():
        subparsers.add_parser(name, help=help_text)
    validate_parser = subparsers.add_parser("validate", help="Run the acceptance checks")
    validate_parser.add_argument(
        "--quick", action="store_true", help="Run only the fast checks"
    )

    for subparser in subparsers.choices.values():
        subparser.add_argument("config", type=Path, help="Experiment TOML file")
        subparser.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="Override one config value (repeatable)",
        )
    return parser


def main(argv: list[str] | None = None):
    """Run one pipeline command from command line arguments.

    Configuration, numerical and file-system errors are logged and exit with
    status 1.

    >>> import tempfile
    >>> from unittest import mock
    >>> from isac import config
    >>> with tempfile.TemporaryDirectory() as tmp:
    ...     blocker = Path(tmp) / "outputs"
    ...     _ = blocker.write_text("a file where the output directory should be")
    ...     experiment = Path(tmp) / "tiny.toml"
    ...     _ = experiment.write_text(
    ...         "[experiment]\\nseed = 1\\n[system]\\nnum_subcarriers = 16\\n"
    ...         "[data]\\nsnr_list_db = [10.0]\\nsamples_per_snr = 4\\n"
    ...         "test_samples_per_snr = 2\\n"
    ...     )
    ...     with mock.patch.object(config, "OUTPUTS_DIR", blocker):
    ...         main(["generate", str(experiment)])
    Traceback (most recent call last):
        ...
    SystemExit: 1

    """
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        cfg = load_experiment_config(args.config, args.overrides)
        logger.info(
            f"Experiment '{cfg['experiment']['name']}' "
            f"(seed {cfg['experiment']['seed']}): {args.command}"
        )
        if args.command == "validate":
            if not validate(cfg, args.quick):
                sys.exit(1)
        else:
            command, _ = COMMANDS[args.command]
            command(cfg)
            logger.info(f"✓ {args.command} completed successfully")
    except (ValueError, KeyError, OSError, np.linalg.LinAlgError) as e:
        logger.error(f"✗ {args.command} failed: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
