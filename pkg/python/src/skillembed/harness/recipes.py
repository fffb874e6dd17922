"""Experiment recipes: multi-task training, retraining on held-out cells,
latent interpolation, fitting an unseen condition and hierarchical control.

Each recipe writes under the configured output directory, one ``seed-N``
directory per seed, and returns what it measured.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..checkpoint import load_checkpoint, save_checkpoint
from ..embeddings.latents import EmbeddingMode, TaskLatents
from ..embeddings.variational import VariationalEmbedding, write_latent_csv
from ..envs.grid import make_env
from ..envs.trajectory import Cell
from ..errors import CheckpointError, ConfigurationError
from ..hrl.training import HrlResult, train_hrl_reinforce, train_hrl_sac
from ..reinforce.algorithm import ReinforceState
from ..rollout import rollout_fixed_latent
from ..seeding import SeedSequencer
from .config import Algorithm, ExperimentConfig, Recipe, resolve_output_dir
from .learners import (SINGLE_CELL, build_grid, build_learner, checkpoint_payload, checkpoint_signer,
                       episode_limit, evaluate_cells, independent_learners, make_envs,
                       parameter_count, random_policy_return, restore_learner, step_learner)
from .metrics import MetricsRow, MetricsWriter, write_rows

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
LATENTS_FILE = "latents.csv"
CHECKPOINT_FILE = "final.ckpt"

PathLike = Union[str, Path]


def seed_dir(root: Path, seed: int) -> Path:
    return root / f"seed-{seed}"


def checkpoint_paths(path: PathLike) -> List[Path]:
    """``path`` itself, or every ``seed-*/final.ckpt`` below it when it is a run directory."""
    path = Path(path)
    if path.is_dir():
        found = sorted(path.glob(f"seed-*/{CHECKPOINT_FILE}"))
        if not found:
            raise CheckpointError(f"no {CHECKPOINT_FILE} under {path}")
        return found
    return [path]


def load_run(cfg: ExperimentConfig, path: PathLike) -> Dict[str, Any]:
    """Loads a checkpoint with the configured passphrase, if any."""
    return load_checkpoint(path, checkpoint_signer(cfg.experiment))


def _map_seeds(cfg: ExperimentConfig, work, items: Sequence[Any]) -> List[Any]:
    if cfg.experiment.workers == 1 or len(items) < 2:
        return [work(item) for item in items]
    with ThreadPoolExecutor(max_workers=cfg.experiment.workers) as pool:
        return list(pool.map(work, items))


# Training


def train_seed(cfg: ExperimentConfig, seed: int, out_dir: Path) -> Path:
    """Trains the configured learner for one seed.

    Args:
        cfg: Run configuration.
        seed: Root seed of the run.
        out_dir: Run directory; files go to its ``seed-N`` subdirectory.

    Returns:
        Path of the final checkpoint.

    Raises:
        DivergenceError: If a loss or gradient becomes non-finite.
    """
    exp = cfg.experiment
    directory = seed_dir(out_dir, seed)
    grid = build_grid(cfg)
    limit = episode_limit(cfg)
    seeds = SeedSequencer(seed)
    name = exp.algorithm.value
    logger.info("training %s on %s (%s mask), seed %d, %d iterations", name, exp.env_family.value,
                exp.grid_mask.value, seed, exp.iterations)
    with MetricsWriter(directory / METRICS_FILE, exp.record_wall_clock) as writer:
        if exp.algorithm is Algorithm.INDEPENDENT:
            learners = independent_learners(cfg, grid, grid.trained_cells(), seeds, limit)
            for _ in range(exp.iterations):
                for cell, learner in learners.items():
                    writer.write_all(step_learner(learner, name, seed, {SINGLE_CELL: cell}))
            write_latent_csv(directory / LATENTS_FILE, [])
            payload = checkpoint_payload(cfg, seed, learners=learners)
        else:
            learner = build_learner(cfg, make_envs(grid, grid.trained_cells(), limit), grid.shape, seeds)
            for _ in range(exp.iterations):
                writer.write_all(step_learner(learner, name, seed))
            write_latent_csv(directory / LATENTS_FILE, learner.latents.embeddings())
            payload = checkpoint_payload(cfg, seed, learner=learner)
    return save_checkpoint(directory / CHECKPOINT_FILE, payload, checkpoint_signer(exp))


def run_training(cfg: ExperimentConfig) -> List[Path]:
    """Trains every configured seed, in parallel when ``workers`` allows."""
    out_dir = resolve_output_dir(cfg.experiment)
    return _map_seeds(cfg, lambda seed: train_seed(cfg, seed, out_dir), cfg.experiment.seed_values())


def independent_baseline(cfg: ExperimentConfig, seed: int) -> Tuple[Dict[Cell, List[float]], Dict[Cell, int]]:
    """Per-cell episode returns and parameter counts of single-task learners on every trained cell."""
    grid = build_grid(cfg)
    learners = independent_learners(cfg, grid, grid.trained_cells(), SeedSequencer(seed), episode_limit(cfg))
    returns: Dict[Cell, List[float]] = {cell: [] for cell in learners}
    for _ in range(cfg.experiment.iterations):
        for cell, learner in learners.items():
            returns[cell].extend(_episode_returns(learner, step_learner(learner, "independent", seed)))
    return returns, {cell: parameter_count(learner) for cell, learner in learners.items()}


def _episode_returns(learner, rows) -> List[float]:
    """One return per episode; REINFORCE rows average ``episodes_per_task`` episodes."""
    repeat = learner.config.episodes_per_task if isinstance(learner, ReinforceState) else 1
    return [row.mean_return for row in rows for _ in range(repeat)]


def trajectories_to_match(episode_returns: Sequence[float], target: float, window: int = 1) -> Optional[int]:
    """Episodes needed before the mean of the last ``window`` returns reaches ``target``, or None."""
    returns = np.asarray(episode_returns, dtype=np.float64)
    for k in range(window - 1, len(returns)):
        if np.mean(returns[k - window + 1: k + 1]) >= target:
            return k + 1
    return None


# Retraining


@dataclass
class RetrainResult:
    seed: int
    initial_returns: Dict[Cell, float]
    random_returns: Dict[Cell, float]
    final_returns: Dict[Cell, float]
    trajectories_to_match: Dict[Cell, Optional[int]] = field(default_factory=dict)


def retrain(cfg: ExperimentConfig, payload: Mapping[str, Any], cells: Optional[Sequence[Cell]] = None,
            out_dir: Optional[Path] = None) -> RetrainResult:
    """Evaluates a checkpoint on held-out cells, then fine-tunes every parameter on them.

    The held-out cells reuse the embedding rows their indices already learned
    on other cells of the same row and column.
    """
    run_cfg, grid, learner, seed = restore_learner(payload)
    cells = [tuple(cell) for cell in (cells or cfg.retrain.cells or grid.heldout_cells())]
    if not cells:
        raise ConfigurationError("no held-out cells to retrain on")
    rows, cols = grid.shape
    for i, j in cells:
        if not (0 <= i < rows and 0 <= j < cols):
            raise ConfigurationError(f"cell ({i}, {j}) outside the {rows}x{cols} grid")
    overlap = sorted(set(cells) & set(grid.trained_cells()))
    if overlap:
        raise ConfigurationError(f"cells {overlap} were trained on; retraining needs held-out cells")
    seeds = SeedSequencer(seed)
    limit = episode_limit(run_cfg)
    envs = make_envs(grid, cells, limit)
    episodes = cfg.experiment.evaluation_episodes
    initial = evaluate_cells(learner.policy, learner.latents, envs, episodes, seeds, "retrain-initial")
    random_returns = {
        cell: random_policy_return(grid.make_env(*cell, max_steps=limit), cfg.retrain.random_episodes,
                                   seeds.rng("random-policy", *cell))
        for cell in cells
    }
    for cell in cells:
        logger.info("cell %s: initial return %.3f, random policy %.3f", cell, initial[cell], random_returns[cell])

    result = RetrainResult(seed, initial, random_returns, dict(initial))
    directory = seed_dir(out_dir or resolve_output_dir(cfg.experiment) / "retrain", seed)
    with MetricsWriter(directory / METRICS_FILE, cfg.experiment.record_wall_clock) as writer:
        if cfg.retrain.iterations:
            fine = build_learner(run_cfg, envs, grid.shape, seeds, latents=learner.latents, policy=learner.policy,
                                 stream="retrain")
            for _ in range(cfg.retrain.iterations):
                writer.write_all(step_learner(fine, "retrain", seed))
            result.final_returns = evaluate_cells(fine.policy, fine.latents, envs, episodes, seeds, "retrain-final")
        if cfg.retrain.independent_iterations:
            learners = independent_learners(run_cfg, grid, cells, seeds, limit)
            for cell, baseline in learners.items():
                returns: List[float] = []
                for _ in range(cfg.retrain.independent_iterations):
                    episode_rows = step_learner(baseline, Algorithm.INDEPENDENT.value, seed, {SINGLE_CELL: cell})
                    writer.write_all(episode_rows)
                    returns.extend(_episode_returns(baseline, episode_rows))
                result.trajectories_to_match[cell] = trajectories_to_match(returns, initial[cell])
    return result


def summarize_initial_returns(results: Sequence[Mapping[Cell, float]]) -> Dict[Cell, Tuple[float, float]]:
    """Mean and standard error over seeds per cell."""
    summary = {}
    for cell in sorted({cell for result in results for cell in result}):
        values = np.array([result[cell] for result in results if cell in result])
        se = float(np.std(values, ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
        summary[cell] = (float(np.mean(values)), se)
    return summary


RETRAIN_COLUMNS = ("i", "j", "seeds", "initial_mean", "initial_se", "random_mean", "final_mean",
                   "trajectories_to_match")


def retrain_table(results: Sequence[RetrainResult]) -> List[Dict[str, Any]]:
    initial = summarize_initial_returns([result.initial_returns for result in results])
    table = []
    for cell, (mean, se) in initial.items():
        matches = [r.trajectories_to_match[cell] for r in results if r.trajectories_to_match.get(cell) is not None]
        table.append({
            "i": cell[0],
            "j": cell[1],
            "seeds": len(results),
            "initial_mean": mean,
            "initial_se": se,
            "random_mean": float(np.mean([r.random_returns[cell] for r in results])),
            "final_mean": float(np.mean([r.final_returns[cell] for r in results])),
            "trajectories_to_match": float(np.mean(matches)) if matches else None,
        })
    return table


def run_retrain(cfg: ExperimentConfig, checkpoint: PathLike, cells: Optional[Sequence[Cell]] = None
                ) -> List[RetrainResult]:
    """Retrains every seed checkpoint under ``checkpoint`` and writes the initial-return table.

    Args:
        cfg: Run configuration.
        checkpoint: A checkpoint file or a run directory.
        cells: Cells to retrain on; defaults to the held-out cells.

    Returns:
        One result per seed checkpoint.
    """
    out_dir = resolve_output_dir(cfg.experiment) / "retrain"
    paths = checkpoint_paths(checkpoint)
    results = _map_seeds(cfg, lambda path: retrain(cfg, load_run(cfg, path), cells, out_dir), paths)
    write_rows(out_dir / "initial_returns.csv", RETRAIN_COLUMNS, retrain_table(results))
    return results


# Interpolation


def sweep(start: np.ndarray, end: np.ndarray, count: int) -> np.ndarray:
    """``count`` evenly spaced points from ``start`` to ``end``, both included."""
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    return start + np.linspace(0.0, 1.0, count)[:, None] * (end - start)


def _means(emb: VariationalEmbedding) -> np.ndarray:
    return emb.means().reshape(emb.index_count, emb.latent_dim)


def interpolation_points(cfg: ExperimentConfig, latents: TaskLatents, space: str) -> np.ndarray:
    settings = cfg.interpolate
    if settings.points:
        return np.array(settings.points, dtype=np.float64)
    emb = latents.z if space == "z" else latents.g
    means = _means(emb)
    for index in (settings.start_index, settings.end_index):
        if not 0 <= index < emb.index_count:
            raise ConfigurationError(f"{space} index {index} outside 0..{emb.index_count - 1}")
    return sweep(means[settings.start_index], means[settings.end_index], settings.count)


INTERPOLATION_COLUMNS = ("point", "space", "coordinates", "mean_return", "tip_x", "tip_y")


def interpolate(cfg: ExperimentConfig, payload: Mapping[str, Any], space: Optional[str] = None,
                points: Optional[np.ndarray] = None, out_path: Optional[Path] = None) -> List[Dict[str, Any]]:
    """Rolls the frozen policy out at fixed latent points of one space, the other held at a learned mean.

    Cart-pole points report the mean pole-tip x over every step; reacher
    points report the final fingertip position. Both average over episodes.
    """
    run_cfg, grid, learner, seed = restore_learner(payload)
    latents = learner.latents
    if latents.mode is not EmbeddingMode.DISENTANGLED:
        raise ConfigurationError(f"interpolation needs disentangled embeddings, got {latents.mode.value}")
    settings = cfg.interpolate
    space = space or settings.space
    if space not in ("z", "g"):
        raise ConfigurationError(f"space must be z or g, got {space!r}")
    points = interpolation_points(cfg, latents, space) if points is None else np.asarray(points, dtype=np.float64)
    emb, other = (latents.z, latents.g) if space == "z" else (latents.g, latents.z)
    if points.ndim != 2 or points.shape[1] != emb.latent_dim:
        raise ConfigurationError(f"{space} points need {emb.latent_dim} coordinates, got shape {points.shape}")
    if not 0 <= settings.fixed_index < other.index_count:
        raise ConfigurationError(f"fixed index {settings.fixed_index} outside 0..{other.index_count - 1}")
    fixed = _means(other)[settings.fixed_index]
    env = grid.make_env(*settings.env_cell, max_steps=episode_limit(run_cfg))
    seeds = SeedSequencer(seed)

    table = []
    for k, point in enumerate(points):
        latent = np.concatenate([point, fixed]) if space == "z" else np.concatenate([fixed, point])
        returns, tip_x, tip_y = [], [], []
        for episode in range(settings.episodes):
            traj = rollout_fixed_latent(learner.policy, env, latent, seeds.rng("interpolate", k, episode))
            returns.append(traj.total_reward)
            if grid.family.is_cartpole:
                tip_x.append(np.mean([info["tip_x"] for info in traj.infos]))
            else:
                final = traj.final_info()
                tip_x.append(final["tip_x"])
                tip_y.append(final["tip_y"])
        table.append({
            "point": k,
            "space": space,
            "coordinates": tuple(float(c) for c in point),
            "mean_return": float(np.mean(returns)),
            "tip_x": float(np.mean(tip_x)),
            "tip_y": float(np.mean(tip_y)) if tip_y else None,
        })
    out_path = out_path or seed_dir(resolve_output_dir(cfg.experiment) / "interpolate", seed) / "points.csv"
    write_rows(out_path, INTERPOLATION_COLUMNS, table)
    return table


# Unseen conditions


@dataclass
class UnseenFit:
    seed: int
    final_return: float
    z_mean: Optional[np.ndarray]
    g_mean: Optional[np.ndarray]
    returns: List[float]


def fresh_latents(latents: TaskLatents) -> TaskLatents:
    """A 1 x 1 embedding pair at the prior, laid out like ``latents``."""
    if latents.mode is EmbeddingMode.DISENTANGLED:
        return TaskLatents(latents.mode, (1, 1), VariationalEmbedding.at_prior(1, latents.z.latent_dim, "z"),
                           VariationalEmbedding.at_prior(1, latents.g.latent_dim, "g"))
    if latents.mode is EmbeddingMode.SINGLE:
        return TaskLatents(latents.mode, (1, 1), VariationalEmbedding.at_prior(1, latents.z.latent_dim, "zg"))
    raise ConfigurationError("a learner without task embeddings has nothing to fit")


def unseen_condition_fit(cfg: ExperimentConfig, payload: Mapping[str, Any], dynamics: Optional[Sequence[float]] = None,
                         goal: Optional[Sequence[float]] = None, out_dir: Optional[Path] = None) -> UnseenFit:
    """Fits only a fresh embedding pair to a new condition; the shared policy stays frozen.

    Args:
        cfg: Run configuration; ``[unseen]`` supplies defaults.
        payload: Decoded training checkpoint.
        dynamics: Dynamics parameters of the new condition.
        goal: Goal parameters of the new condition.
        out_dir: Directory for the fit's metrics.

    Returns:
        The fitted embedding means, the per-episode returns and the final return.

    Raises:
        ConfigurationError: If the parameters do not fit the environment family.
    """
    run_cfg, grid, learner, seed = restore_learner(payload)
    dynamics = tuple(dynamics if dynamics is not None else cfg.unseen.dynamics)
    goal = tuple(goal if goal is not None else cfg.unseen.goal)
    env = make_env(grid.family, dynamics, goal, episode_limit(run_cfg))
    seeds = SeedSequencer(seed)
    fit = build_learner(run_cfg, {SINGLE_CELL: env}, (1, 1), seeds, latents=fresh_latents(learner.latents),
                        policy=learner.policy, stream="unseen")
    fit.train_policy = False
    returns: List[float] = []
    directory = seed_dir(out_dir or resolve_output_dir(cfg.experiment) / "unseen", seed)
    with MetricsWriter(directory / METRICS_FILE, cfg.experiment.record_wall_clock) as writer:
        for _ in range(cfg.unseen.iterations):
            rows = step_learner(fit, "unseen", seed)
            writer.write_all(rows)
            returns.extend(row.mean_return for row in rows)
    write_latent_csv(directory / LATENTS_FILE, fit.latents.embeddings())
    final = evaluate_cells(fit.policy, fit.latents, {SINGLE_CELL: env}, cfg.experiment.evaluation_episodes, seeds,
                           "unseen-eval")[SINGLE_CELL]
    z_mean = _means(fit.latents.z)[0]
    g_mean = _means(fit.latents.g)[0] if fit.latents.g is not None else None
    logger.info("unseen condition dynamics=%s goal=%s: final return %.3f, z mean %s", dynamics, goal, final, z_mean)
    return UnseenFit(seed, final, z_mean, g_mean, returns)


# Hierarchical control

HRL_PARAMETER_COLUMNS = ("learner", "parameters")


def run_hrl(cfg: ExperimentConfig, payload: Mapping[str, Any], seed: int, out_dir: Optional[Path] = None) -> HrlResult:
    """High-level learner over the checkpoint's frozen skills, against a flat learner, for one seed."""
    run_cfg, grid, learner, _ = restore_learner(payload)
    seeds = SeedSequencer(seed)
    if cfg.experiment.recipe is Recipe.HRL_SAC:
        result = train_hrl_sac(cfg.hrl, learner.policy, learner.latents, grid, seeds)
    else:
        if not grid.family.is_cartpole:
            raise ConfigurationError("asteroid options need skills trained on cart-pole")
        result = train_hrl_reinforce(cfg.hrl, learner.policy, learner.latents, seeds, cfg.episodic)
    directory = seed_dir(out_dir or resolve_output_dir(cfg.experiment) / "hrl", seed)
    with MetricsWriter(directory / METRICS_FILE, cfg.experiment.record_wall_clock) as writer:
        for episode in result.episodes:
            info = {"env_steps": episode.env_steps}
            info.update(episode.info)
            writer.write(MetricsRow(episode.learner, seed, episode.episode, 0, 0, episode.total_reward, info=info))
    write_rows(directory / "parameters.csv", HRL_PARAMETER_COLUMNS,
               [{"learner": name, "parameters": count} for name, count in sorted(result.parameter_counts.items())])
    return result


# Dispatch


def _require_checkpoint(cfg: ExperimentConfig) -> Path:
    if not cfg.experiment.checkpoint:
        raise ConfigurationError(f"recipe {cfg.experiment.recipe.value} needs experiment.checkpoint")
    return Path(cfg.experiment.checkpoint)


def run_recipe(cfg: ExperimentConfig) -> Any:
    """Runs the recipe named in ``[experiment]``.

    Args:
        cfg: Run configuration.

    Returns:
        The recipe's result: checkpoint paths, retrain results, interpolation rows,
        unseen fits or HRL results.

    Raises:
        ConfigurationError: If a recipe that needs a checkpoint has none.
    """
    recipe = cfg.experiment.recipe
    if recipe is Recipe.TRAIN:
        return run_training(cfg)
    checkpoint = _require_checkpoint(cfg)
    if recipe is Recipe.RETRAIN:
        return run_retrain(cfg, checkpoint)
    paths = checkpoint_paths(checkpoint)
    if recipe is Recipe.INTERPOLATE:
        return _map_seeds(cfg, lambda path: interpolate(cfg, load_run(cfg, path)), paths)
    if recipe is Recipe.UNSEEN:
        return _map_seeds(cfg, lambda path: unseen_condition_fit(cfg, load_run(cfg, path)), paths)
    payload = load_run(cfg, paths[0])
    return _map_seeds(cfg, lambda seed: run_hrl(cfg, payload, seed), cfg.experiment.seed_values())
