"""Per-iteration metrics files.

One CSV row per learner, seed, iteration and cell. Floats are written with
``repr`` so that a rerun with the same config and seed reproduces the file
byte for byte; the wall-clock column stays empty unless it is enabled.
"""

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

METRICS_COLUMNS = ("learner", "seed", "iteration", "i", "j", "mean_return", "episodes", "kl_z", "kl_g", "losses",
                   "info", "wall_clock_seconds")


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, Mapping):
        return ";".join(f"{key}={format_cell(value[key])}" for key in sorted(value))
    if isinstance(value, (tuple, list)):
        return ",".join(format_cell(item) for item in value)
    return str(value)


@dataclass
class MetricsRow:
    """One metrics line: a learner's mean return on one cell at one iteration."""

    learner: str
    seed: int
    iteration: int
    i: int
    j: int
    mean_return: float
    episodes: int = 1
    kl_z: Optional[float] = None
    kl_g: Optional[float] = None
    losses: Dict[str, float] = field(default_factory=dict)
    info: Dict[str, float] = field(default_factory=dict)
    wall_clock_seconds: Optional[float] = None

    def as_record(self) -> Dict[str, str]:
        return {column: format_cell(getattr(self, column)) for column in METRICS_COLUMNS}


class MetricsWriter:
    """Appends rows to ``path``, flushing after each one."""

    def __init__(self, path: Union[str, Path], record_wall_clock: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.record_wall_clock = record_wall_clock
        self.rows_written = 0
        self._started = time.monotonic()
        self._file = self.path.open("w", newline="", encoding="utf-8")
        self._writer = csv.DictWriter(self._file, fieldnames=METRICS_COLUMNS, lineterminator="\n")
        self._writer.writeheader()

    def write(self, row: MetricsRow) -> None:
        """Writes ``row``, stamping or clearing its wall-clock time."""
        if self.record_wall_clock and row.wall_clock_seconds is None:
            row.wall_clock_seconds = time.monotonic() - self._started
        elif not self.record_wall_clock:
            row.wall_clock_seconds = None
        self._writer.writerow(row.as_record())
        self._file.flush()
        self.rows_written += 1

    def write_all(self, rows: Iterable[MetricsRow]) -> None:
        for row in rows:
            self.write(row)

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_rows(path: Union[str, Path], columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """Writes a small summary table in the metrics file format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({column: format_cell(row.get(column)) for column in columns})
    return path


def read_rows(path: Union[str, Path]) -> List[Dict[str, str]]:
    """Rows of a metrics or summary file as string dictionaries."""
    with Path(path).open(newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
