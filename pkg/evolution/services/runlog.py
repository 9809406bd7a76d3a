"""Per-event CSV run log, replay and population fitness histograms."""

from __future__ import annotations

import csv
import logging
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from ..exceptions import FormatError, InputError

if TYPE_CHECKING:
    from .search import Individual, Population

logger = logging.getLogger(__name__)

COLUMNS = (
    "wallclock_s",
    "event",
    "individual_id",
    "parent_id",
    "mutation_tag",
    "params",
    "fitness",
    "best_fitness",
    "population_size",
)


@dataclass(frozen=True)
class LogEvent:
    wallclock_s: float
    event: str
    individual_id: int
    parent_id: int | None
    mutation_tag: str
    params: int
    fitness: float
    best_fitness: float
    population_size: int

    def as_csv(self) -> dict[str, str]:
        row = asdict(self)
        row["wallclock_s"] = f"{self.wallclock_s:.3f}"
        row["parent_id"] = "" if self.parent_id is None else str(self.parent_id)
        # repr keeps full float precision so seeded reruns compare equal.
        row["fitness"] = repr(self.fitness)
        row["best_fitness"] = repr(self.best_fitness)
        return {k: str(v) for k, v in row.items()}

    @classmethod
    def from_csv(cls, row: dict[str, str]) -> LogEvent:
        try:
            return cls(
                wallclock_s=float(row["wallclock_s"]),
                event=row["event"],
                individual_id=int(row["individual_id"]),
                parent_id=int(row["parent_id"]) if row["parent_id"] else None,
                mutation_tag=row["mutation_tag"],
                params=int(row["params"]),
                fitness=float(row["fitness"]),
                best_fitness=float(row["best_fitness"]),
                population_size=int(row["population_size"]),
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(f"malformed run-log row {row}: {exc}") from exc

    def without_wallclock(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self) if f.name != "wallclock_s")


EventSink = Callable[[LogEvent, "Individual"], None]


class RunLog:
    """Collects events in memory and, given a path, appends them to a CSV.

    The file is flushed after every event so interrupted runs stay readable.
    """

    def __init__(self, path: str | Path | None = None, sinks: Iterable[EventSink] = ()):
        self.path = Path(path) if path is not None else None
        self.rows: list[LogEvent] = []
        self.sinks = list(sinks)
        self._start = time.perf_counter()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("w", newline="") as handle:
                csv.DictWriter(handle, fieldnames=COLUMNS).writeheader()

    def record(self, event: str, individual: Individual, population: Population) -> LogEvent:
        row = LogEvent(
            wallclock_s=time.perf_counter() - self._start,
            event=event,
            individual_id=individual.id,
            parent_id=individual.parent_id,
            mutation_tag=str(individual.mutation_tag) if individual.mutation_tag else "",
            params=individual.params,
            fitness=float(individual.fitness),
            best_fitness=float(population.best().fitness),
            population_size=len(population),
        )
        self.rows.append(row)
        if self.path is not None:
            with self.path.open("a", newline="") as handle:
                csv.DictWriter(handle, fieldnames=COLUMNS).writerow(row.as_csv())
                handle.flush()
        for sink in self.sinks:
            sink(row, individual)
        logger.info(
            "%s: id=%d parent=%s tag=%s params=%d fitness=%.4f best=%.4f size=%d",
            event,
            row.individual_id,
            row.parent_id,
            row.mutation_tag or "-",
            row.params,
            row.fitness,
            row.best_fitness,
            row.population_size,
        )
        return row


def read_run_log(path: str | Path) -> list[LogEvent]:
    try:
        with Path(path).open(newline="") as handle:
            reader = csv.DictReader(handle)
            if tuple(reader.fieldnames or ()) != COLUMNS:
                raise FormatError(f"{path}: unexpected columns {reader.fieldnames}")
            return [LogEvent.from_csv(row) for row in reader]
    except FileNotFoundError as exc:
        raise InputError(f"run log not found: {path}") from exc


def live_populations(rows: Sequence[LogEvent]) -> list[list[LogEvent]]:
    """Population members after each event.

    ``replace`` rows drop the worst member first: lowest fitness, the most
    recent id on ties.
    """
    live: dict[int, LogEvent] = {}
    snapshots = []
    for row in rows:
        if row.event == "replace":
            worst = min(live.values(), key=lambda r: (r.fitness, -r.individual_id))
            del live[worst.individual_id]
        live[row.individual_id] = row
        snapshots.append(list(live.values()))
    return snapshots


def fitness_histogram(
    rows: Sequence[LogEvent],
    bins: int | Sequence[float] = 10,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Percentage of the live population in each fitness range, per event."""
    if not rows:
        return np.zeros(0), []
    if isinstance(bins, int):
        values = [row.fitness for row in rows]
        low, high = min(values), max(values)
        edges = np.linspace(low, high if high > low else low + 1.0, bins + 1)
    else:
        edges = np.asarray(bins, dtype=np.float64)
    percentages = []
    for members in live_populations(rows):
        counts, _ = np.histogram([m.fitness for m in members], bins=edges)
        percentages.append(100.0 * counts / len(members))
    return edges, percentages
