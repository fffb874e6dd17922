"""Experiment configuration files.

A config is an INI file with one section per settings dataclass. Every key
names a field of that dataclass and its value is parsed from the field's
type: enums by their string value, booleans as true/false, vectors as comma
lists and lists of vectors or cells as ``a,b;c,d``.
"""

import configparser
import dataclasses
import io
import os
import typing
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, Tuple, Union

from ..envs.grid import EnvFamily, GridMask
from ..errors import ConfigurationError
from ..hrl.options import HrlConfig
from ..reinforce.algorithm import ReinforceConfig
from ..reinforce.baseline import EpisodicReinforceConfig
from ..sac.algorithm import SacConfig

OUTPUT_ROOT_ENV = "SKILLEMBED_OUTPUT_ROOT"
_TRUE = ("true", "yes", "on", "1")
_FALSE = ("false", "no", "off", "0")


class Algorithm(Enum):
    """Which learner and embedding layout a run trains."""

    DSE_REINFORCE = "dse-reinforce"
    DSE_SAC = "dse-sac"
    SINGLE_EMBEDDING_REINFORCE = "single-embedding-reinforce"
    SINGLE_EMBEDDING_SAC = "single-embedding-sac"
    INDEPENDENT = "independent"

    def uses_sac(self, family: EnvFamily) -> bool:
        """Independent learners follow the family: REINFORCE on cart-pole, SAC on the reacher."""
        if self is Algorithm.INDEPENDENT:
            return not family.is_cartpole
        return self in (Algorithm.DSE_SAC, Algorithm.SINGLE_EMBEDDING_SAC)

    @property
    def single_embedding(self) -> bool:
        return self in (Algorithm.SINGLE_EMBEDDING_REINFORCE, Algorithm.SINGLE_EMBEDDING_SAC)


class Recipe(Enum):
    """Which experiment ``run`` performs."""

    TRAIN = "train"
    RETRAIN = "retrain"
    INTERPOLATE = "interpolate"
    UNSEEN = "unseen"
    HRL_REINFORCE = "hrl-reinforce"
    HRL_SAC = "hrl-sac"


@dataclass
class ExperimentSettings:
    """The ``[experiment]`` section.

    ``iterations`` counts collect-and-update rounds for REINFORCE and
    environment steps per cell for soft actor-critic. Seeds run on up to
    ``workers`` threads; each seed writes its own files.
    """

    algorithm: Algorithm
    env_family: EnvFamily
    grid_mask: GridMask = GridMask.FULL
    recipe: Recipe = Recipe.TRAIN
    seed: int = 0
    seeds: int = 5
    iterations: int = 1000
    max_episode_steps: int = 0
    evaluation_episodes: int = 10
    output_dir: str = "runs"
    checkpoint: str = ""
    checkpoint_passphrase: str = ""
    record_wall_clock: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigurationError(f"experiment.workers must be at least 1, got {self.workers}")
        if self.seed < 0:
            raise ConfigurationError(f"experiment.seed must be non-negative, got {self.seed}")
        if self.seeds < 1:
            raise ConfigurationError(f"experiment.seeds must be at least 1, got {self.seeds}")
        if self.iterations < 0:
            raise ConfigurationError(f"experiment.iterations must be non-negative, got {self.iterations}")
        if self.max_episode_steps < 0:
            raise ConfigurationError(f"experiment.max_episode_steps must be non-negative, got {self.max_episode_steps}")
        if self.evaluation_episodes < 1:
            raise ConfigurationError(f"experiment.evaluation_episodes must be positive, got {self.evaluation_episodes}")

    def seed_values(self) -> Tuple[int, ...]:
        return tuple(range(self.seed, self.seed + self.seeds))


@dataclass
class RetrainSettings:
    """Held-out cells default to the cells outside the grid mask.

    ``independent_iterations`` above zero also trains independent learners on
    the held-out cells to count the trajectories they need to match the
    initial returns.
    """

    cells: Tuple[Tuple[int, int], ...] = ()
    iterations: int = 500
    random_episodes: int = 20
    independent_iterations: int = 0

    def __post_init__(self):
        if self.iterations < 0 or self.independent_iterations < 0:
            raise ConfigurationError("retrain iteration budgets must be non-negative")
        if self.random_episodes < 1:
            raise ConfigurationError(f"retrain.random_episodes must be positive, got {self.random_episodes}")


@dataclass
class InterpolateSettings:
    space: str = "g"
    start_index: int = 0
    end_index: int = 2
    count: int = 5
    fixed_index: int = 1
    env_cell: Tuple[int, ...] = (1, 1)
    points: Tuple[Tuple[float, ...], ...] = ()
    episodes: int = 3

    def __post_init__(self):
        if self.space not in ("z", "g"):
            raise ConfigurationError(f"interpolate.space must be z or g, got {self.space!r}")
        if self.count < 2:
            raise ConfigurationError(f"interpolate.count must be at least 2, got {self.count}")
        if len(self.env_cell) != 2:
            raise ConfigurationError(f"interpolate.env_cell must be i,j, got {self.env_cell}")
        if self.episodes < 1:
            raise ConfigurationError(f"interpolate.episodes must be positive, got {self.episodes}")


@dataclass
class UnseenSettings:
    dynamics: Tuple[float, ...] = (1.75,)
    goal: Tuple[float, ...] = (-0.5,)
    iterations: int = 500

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigurationError(f"unseen.iterations must be non-negative, got {self.iterations}")


@dataclass
class ExperimentConfig:
    """A whole run configuration, one attribute per INI section.

    Sections missing from the file keep their defaults; only
    ``[experiment]`` is required.
    """

    experiment: ExperimentSettings
    reinforce: ReinforceConfig = field(default_factory=ReinforceConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    episodic: EpisodicReinforceConfig = field(default_factory=EpisodicReinforceConfig)
    hrl: HrlConfig = field(default_factory=HrlConfig)
    retrain: RetrainSettings = field(default_factory=RetrainSettings)
    interpolate: InterpolateSettings = field(default_factory=InterpolateSettings)
    unseen: UnseenSettings = field(default_factory=UnseenSettings)


def _sections() -> Iterator[Tuple[str, type]]:
    hints = typing.get_type_hints(ExperimentConfig)
    for f in dataclasses.fields(ExperimentConfig):
        yield f.name, hints[f.name]


SECTIONS = tuple(name for name, _ in _sections())


def _is_required(f: dataclasses.Field) -> bool:
    return f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING


def _parse_items(hint: Any, text: str) -> Tuple[Any, ...]:
    args = typing.get_args(hint)
    items = tuple(args[0](part.strip()) for part in text.split(","))
    if Ellipsis not in args and len(items) != len(args):
        raise ValueError(f"expected {len(args)} values, got {len(items)}")
    return items


def _parse_value(hint: Any, text: str) -> Any:
    text = text.strip()
    if hint is bool:
        lowered = text.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ValueError(f"{text!r} is not a boolean")
    if hint in (int, float, str):
        return hint(text)
    if isinstance(hint, type) and issubclass(hint, Enum):
        return hint(text)
    if typing.get_origin(hint) is tuple:
        if not text:
            return ()
        item = typing.get_args(hint)[0]
        if typing.get_origin(item) is tuple:
            return tuple(_parse_items(item, group) for group in text.split(";"))
        return _parse_items(hint, text)
    raise ValueError(f"unsupported field type {hint}")


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ";".join(_format_value(group) for group in value)
        return ",".join(_format_value(item) for item in value)
    return str(value)


def _build_section(name: str, cls: type, items: Dict[str, str]) -> Any:
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    values = {}
    for key, raw in items.items():
        if key not in fields:
            raise ConfigurationError(f"unknown key {name}.{key}")
        try:
            values[key] = _parse_value(hints[key], raw)
        except ValueError as e:
            raise ConfigurationError(f"bad value for {name}.{key}: {e}") from e
    for key, f in fields.items():
        if _is_required(f) and key not in values:
            raise ConfigurationError(f"missing required key {name}.{key}")
    return cls(**values)


def parse_config(text: str) -> ExperimentConfig:
    """Parses INI text into a typed configuration.

    Args:
        text: INI source.

    Returns:
        The configuration, with every value converted to its field type.

    Raises:
        ConfigurationError: On syntax errors, unknown sections or keys, missing
            required keys, or values that do not convert.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigurationError(f"unreadable config: {e}") from e
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f"unknown section [{section}]")
    if parser.defaults():
        raise ConfigurationError(f"unknown section [{parser.default_section}]")
    sections = {}
    for name, cls in _sections():
        items = dict(parser.items(name)) if parser.has_section(name) else {}
        sections[name] = _build_section(name, cls, items)
    return ExperimentConfig(**sections)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Writes every section and key, so ``parse_config`` restores ``cfg`` exactly."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name, _ in _sections():
        settings = getattr(cfg, name)
        parser[name] = {f.name: _format_value(getattr(settings, f.name)) for f in dataclasses.fields(settings)}
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Reads and parses a config file.

    Args:
        path: INI file.

    Returns:
        The configuration.

    Raises:
        ConfigurationError: If the file cannot be read or parsed.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    return parse_config(text)


def resolve_output_dir(settings: ExperimentSettings) -> Path:
    """``output_dir``, under ``$SKILLEMBED_OUTPUT_ROOT`` when it is relative and the variable is set."""
    path = Path(settings.output_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def parse_cells(text: str) -> Tuple[Tuple[int, int], ...]:
    """``"i,j;i,j"`` as a tuple of cells."""
    try:
        cells = _parse_value(Tuple[Tuple[int, int], ...], text)
    except ValueError as e:
        raise ConfigurationError(f"bad cell list {text!r}: {e}") from e
    if any(len(cell) != 2 for cell in cells):
        raise ConfigurationError(f"cells are written i,j; got {text!r}")
    return cells


def parse_vector(text: str) -> Tuple[float, ...]:
    """``"a,b,..."`` as a tuple of floats."""
    try:
        return _parse_value(Tuple[float, ...], text)
    except ValueError as e:
        raise ConfigurationError(f"bad vector {text!r}: {e}") from e
