"""Command-line entry point.

    skillembed run CONFIG
    skillembed retrain CONFIG CHECKPOINT [--cells i,j;i,j]
    skillembed interpolate CHECKPOINT [--config CONFIG] [--space g] [--points FILE]
    skillembed fit-unseen CHECKPOINT [--config CONFIG] [--dynamics ...] [--goal ...]

Exit status is 0 on success, 2 for configuration and checkpoint errors and 3
when training diverges.
"""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..checkpoint import CheckpointSigner, load_checkpoint
from ..errors import CheckpointError, ConfigurationError, DivergenceError, UsageError
from .config import ExperimentConfig, Recipe, load_config, parse_cells, parse_config, parse_vector
from .recipes import checkpoint_paths, interpolate, load_run, run_recipe, run_retrain, unseen_condition_fit

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skillembed", description="Disentangled skill embedding experiments.")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run the recipe named in a config file")
    run.add_argument("config", type=Path)

    retrain = commands.add_parser("retrain", help="evaluate and fine-tune a checkpoint on held-out cells")
    retrain.add_argument("config", type=Path)
    retrain.add_argument("checkpoint", type=Path, help="checkpoint file or run directory with seed-*/ checkpoints")
    retrain.add_argument("--cells", default=None, help="held-out cells as i,j;i,j")

    interp = commands.add_parser("interpolate", help="roll out the frozen policy at fixed latent points")
    interp.add_argument("checkpoint", type=Path)
    interp.add_argument("--config", type=Path, default=None)
    interp.add_argument("--space", choices=["z", "g"], default=None)
    interp.add_argument("--points", type=Path, default=None, help="CSV file with one latent point per line")
    interp.add_argument("--passphrase", default="", help="checkpoint passphrase when no config is given")

    unseen = commands.add_parser("fit-unseen", help="fit fresh embeddings to an unseen condition")
    unseen.add_argument("checkpoint", type=Path)
    unseen.add_argument("--config", type=Path, default=None)
    unseen.add_argument("--dynamics", default=None, help="comma-separated dynamics parameters")
    unseen.add_argument("--goal", default=None, help="comma-separated goal parameters")
    unseen.add_argument("--passphrase", default="", help="checkpoint passphrase when no config is given")
    return parser


def read_points(path: Path) -> np.ndarray:
    """Reads comma-separated latent points, one per line.

    Raises:
        ConfigurationError: If the file is missing or not numeric.
    """
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    except (OSError, ValueError) as e:
        raise ConfigurationError(f"cannot read points from {path}: {e}") from e


def _checkpoint_config(args: argparse.Namespace, recipe: Recipe) -> ExperimentConfig:
    """The command's config: ``--config`` when given, otherwise the one stored in the checkpoint."""
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        signer = CheckpointSigner.from_passphrase(args.passphrase) if args.passphrase else None
        payload = load_checkpoint(checkpoint_paths(args.checkpoint)[0], signer)
        if "config" not in payload:
            raise CheckpointError(f"{args.checkpoint} stores no run config; pass --config")
        cfg = parse_config(payload["config"])
        cfg = dataclasses.replace(cfg, experiment=dataclasses.replace(
            cfg.experiment, checkpoint_passphrase=args.passphrase))
    return dataclasses.replace(cfg, experiment=dataclasses.replace(
        cfg.experiment, recipe=recipe, checkpoint=str(args.checkpoint)))


def dispatch(args: argparse.Namespace) -> None:
    if args.command == "run":
        run_recipe(load_config(args.config))
    elif args.command == "retrain":
        cells = parse_cells(args.cells) if args.cells else None
        run_retrain(load_config(args.config), args.checkpoint, cells)
    elif args.command == "interpolate":
        cfg = _checkpoint_config(args, Recipe.INTERPOLATE)
        points = read_points(args.points) if args.points is not None else None
        for path in checkpoint_paths(args.checkpoint):
            interpolate(cfg, load_run(cfg, path), args.space, points)
    elif args.command == "fit-unseen":
        cfg = _checkpoint_config(args, Recipe.UNSEEN)
        dynamics = parse_vector(args.dynamics) if args.dynamics else None
        goal = parse_vector(args.goal) if args.goal else None
        for path in checkpoint_paths(args.checkpoint):
            unseen_condition_fit(cfg, load_run(cfg, path), dynamics, goal)
    else:
        raise UsageError(f"unknown command {args.command}")


def main(argv: Optional[List[str]] = None) -> int:
    """Console entry point.

    Args:
        argv: Arguments without the program name; defaults to ``sys.argv``.

    Returns:
        0 on success, 2 on configuration or checkpoint errors, 3 on divergence.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        dispatch(args)
    except (ConfigurationError, CheckpointError) as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    except DivergenceError as e:
        logger.error("training diverged: %s", e)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
