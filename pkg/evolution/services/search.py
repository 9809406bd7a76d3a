"""Steady-state evolutionary search over width genotypes.

The population first grows from ``p1`` seeded individuals to capacity
``p2``; afterwards every step replaces the worst individual. Each child is one
growth-function mutation of a tournament winner and inherits its parent's
weights through function-preserving widening.

All randomness comes from named streams derived from the run seed, so the
seeding phase can run on a thread pool and any run replays exactly.
"""

from __future__ import annotations

import logging
import zlib
from collections.abc import Callable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from ..exceptions import InputError, SearchError, WidthSearchError
from .architecture import (
    ArchitectureSpec,
    ChannelSchedule,
    build_initial_model,
    default_base_width,
    flop_count,
    materialize,
    param_count,
)
from .checkpoint import delete_checkpoint, restore_checkpoint, save_checkpoint
from .datasets import LabeledDataset
from .growth import (
    AccountingMode,
    Genotype,
    GrowthContext,
    GrowthFunctionId,
    MutationPool,
    apply_increment,
    realize_schedule,
)
from .runlog import LogEvent, RunLog
from .tensor import NetworkInstance
from .training import TrainConfig, evaluate_accuracy, train
from .widen import NoiseSpec, widen_network

logger = logging.getLogger(__name__)

# Re-applications allowed when rounding swallows a mutation.
MAX_REAPPLY = 64


@dataclass(frozen=True)
class SearchConfig:
    lam: float = 0.2
    p1: int = 12
    p2: int = 20
    k: int = 3
    child_epochs: int = 15
    init_epochs: int = 31
    param_budget: int = 1
    budget_fraction: float = 0.95
    generation_cap: int = 500
    seed: int = 0
    mode: AccountingMode = AccountingMode.COMPOUND
    pool: MutationPool = field(default_factory=MutationPool)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    base_width: int | None = None
    inherit_weights: bool = True
    param_weight: float = 0.0
    flop_weight: float = 0.0
    flop_reference: int | None = None
    workers: int = 1

    def __post_init__(self):
        if not 1 <= self.k <= self.p1 <= self.p2:
            raise InputError(f"need 1 <= k <= p1 <= p2, got k={self.k} p1={self.p1} p2={self.p2}")
        if not 0 < self.budget_fraction <= 1:
            raise InputError(f"budget_fraction must lie in (0, 1], got {self.budget_fraction}")
        if self.param_budget < 1:
            raise InputError(f"param_budget must be >= 1, got {self.param_budget}")
        if self.generation_cap < 0:
            raise InputError(f"generation_cap must be >= 0, got {self.generation_cap}")
        if self.child_epochs < 0 or self.init_epochs < 0:
            raise InputError("epoch counts must be >= 0")
        if self.workers < 1:
            raise InputError(f"workers must be >= 1, got {self.workers}")
        if self.param_weight < 0 or self.flop_weight < 0:
            raise InputError("objective weights must be >= 0")
        object.__setattr__(self, "mode", AccountingMode(self.mode))

    @property
    def budget_target(self) -> float:
        return self.budget_fraction * self.param_budget


@dataclass
class Individual:
    id: int
    parent_id: int | None
    genotype: Genotype
    schedule: ChannelSchedule
    params: int
    flops: int
    mutation_tag: GrowthFunctionId | None = None
    accuracy: float | None = None
    fitness: float | None = None
    checkpoint: Path | None = None

    @property
    def evaluated(self) -> bool:
        return self.fitness is not None

    def assign_fitness(self, accuracy: float, fitness: float) -> None:
        if self.fitness is not None:
            raise SearchError("fitness already assigned", self.id)
        self.accuracy = accuracy
        self.fitness = fitness


class Population:
    def __init__(self, members: Sequence[Individual] = ()):
        self.members: list[Individual] = list(members)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[Individual]:
        return iter(self.members)

    def add(self, individual: Individual) -> None:
        self.members.append(individual)

    def remove(self, individual: Individual) -> None:
        self.members.remove(individual)

    def best(self) -> Individual:
        """Highest fitness; the lower id wins ties."""
        return max(self.members, key=lambda ind: (ind.fitness, -ind.id))

    def worst(self) -> Individual:
        """Lowest fitness; the higher (more recent) id loses ties."""
        return min(self.members, key=lambda ind: (ind.fitness, -ind.id))


class RandomStreams:
    """Independent generators keyed by ``(name, index)`` under one seed."""

    def __init__(self, seed: int):
        self.seed = seed

    def get(self, name: str, *index: int) -> np.random.Generator:
        key = (zlib.crc32(name.encode()), *index)
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))


class WeightStore(Protocol):
    def put(self, individual: Individual, net: NetworkInstance) -> None: ...

    def get(self, individual: Individual) -> NetworkInstance: ...

    def discard(self, individual: Individual) -> None: ...


class MemoryWeightStore:
    def __init__(self):
        self._nets: dict[int, NetworkInstance] = {}

    def put(self, individual, net):
        self._nets[individual.id] = net

    def get(self, individual):
        try:
            return self._nets[individual.id]
        except KeyError:
            raise SearchError("no weights stored", individual.id) from None

    def discard(self, individual):
        self._nets.pop(individual.id, None)


class CheckpointWeightStore:
    """Weights live in one checkpoint file per individual under ``directory``."""

    def __init__(self, directory: str | Path, spec: ArchitectureSpec, dtype=np.float32):
        self.directory = Path(directory)
        self.spec = spec
        self.dtype = dtype

    def put(self, individual, net):
        individual.checkpoint = save_checkpoint(net, self.directory / f"individual-{individual.id:05d}.ckpt")

    def get(self, individual):
        if individual.checkpoint is None:
            raise SearchError("no checkpoint recorded", individual.id)
        net = materialize(self.spec, individual.schedule, 0, self.dtype)
        return restore_checkpoint(net, individual.checkpoint)

    def discard(self, individual):
        delete_checkpoint(individual.checkpoint)
        individual.checkpoint = None


class FitnessEvaluator(Protocol):
    """Scores an individual; returns ``(accuracy, trained net or None)``.

    Must be safe to call concurrently on distinct individuals.
    """

    needs_weights: bool

    def __call__(
        self, individual: Individual, net: NetworkInstance | None, rng: np.random.Generator
    ) -> tuple[float, NetworkInstance | None]: ...


class TrainingEvaluator:
    """Trains each child for ``epochs`` (a fresh SGDR cycle) and scores validation accuracy."""

    needs_weights = True

    def __init__(self, train_data: LabeledDataset, validation: LabeledDataset, train_cfg: TrainConfig, epochs: int):
        if len(validation) == 0:
            raise InputError("fitness needs a non-empty validation split")
        self.train_data = train_data
        self.validation = validation
        self.train_cfg = replace(train_cfg, epochs=epochs)

    def pretrain(self, net: NetworkInstance, epochs: int, rng: np.random.Generator) -> NetworkInstance:
        net, trace = train(net, self.train_data, replace(self.train_cfg, epochs=epochs), rng)
        if trace:
            logger.info("Initial model trained: %d epochs, final loss %.4f", epochs, trace[-1])
        return net

    def __call__(self, individual, net, rng):
        net, _ = train(net, self.train_data, self.train_cfg, rng)
        return evaluate_accuracy(net, self.validation), net


class SyntheticEvaluator:
    """Fitness computed from the individual alone; no weights are built."""

    needs_weights = False

    def __init__(self, score: Callable[[Individual], float]):
        self.score = score

    def __call__(self, individual, net, rng):
        return float(self.score(individual)), None


def budget_distance_evaluator(budget: int) -> SyntheticEvaluator:
    return SyntheticEvaluator(lambda ind: -abs(ind.params - budget))


def tournament_select(pop: Population, k: int, rng: np.random.Generator) -> Individual:
    """Best of ``k`` members drawn without replacement; lower id wins ties."""
    if len(pop) == 0:
        raise InputError("cannot select from an empty population")
    if not 1 <= k <= len(pop):
        raise InputError(f"tournament size {k} exceeds population size {len(pop)}")
    picked = rng.choice(len(pop), size=k, replace=False)
    return max((pop.members[i] for i in picked), key=lambda ind: (ind.fitness, -ind.id))


@dataclass
class SearchResult:
    best: Individual
    population: Population
    log: list[LogEvent]
    initial: Individual
    steps: int
    budget_reached: bool

    @property
    def warning(self) -> bool:
        return not self.budget_reached


class EvolutionEngine:
    def __init__(
        self,
        spec: ArchitectureSpec,
        cfg: SearchConfig,
        evaluator: FitnessEvaluator,
        streams: RandomStreams | None = None,
        store: WeightStore | None = None,
        log: RunLog | None = None,
    ):
        self.spec = spec
        self.cfg = cfg
        self.evaluator = evaluator
        self.streams = streams or RandomStreams(cfg.seed)
        self.store = store or MemoryWeightStore()
        self.log = log or RunLog()
        self.ctx = GrowthContext.for_spec(spec, cfg.lam)
        self.base_width = cfg.base_width or default_base_width(spec)
        self.flop_reference = cfg.flop_reference
        self._next_id = 1

    def initial_individual(self) -> tuple[Individual, NetworkInstance | None]:
        slots = [self.base_width] * self.spec.slot_count
        genotype = Genotype.initial(slots, self.cfg.mode, self.cfg.lam)
        schedule = realize_schedule(genotype, self.spec)
        initial = Individual(
            id=0,
            parent_id=None,
            genotype=genotype,
            schedule=schedule,
            params=param_count(self.spec, schedule),
            flops=flop_count(self.spec, schedule),
        )
        if self.flop_reference is None:
            self.flop_reference = initial.flops
        net = None
        if self.evaluator.needs_weights:
            net = build_initial_model(self.spec, self.base_width, self.streams.get("init"))
            pretrain = getattr(self.evaluator, "pretrain", None)
            if pretrain is not None and self.cfg.init_epochs:
                net = pretrain(net, self.cfg.init_epochs, self.streams.get("init-train"))
            self.store.put(initial, net)
        return initial, net

    def objective(self, accuracy: float, individual: Individual) -> float:
        score = accuracy
        if self.cfg.param_weight:
            score -= self.cfg.param_weight * individual.params / self.cfg.param_budget
        if self.cfg.flop_weight:
            score -= self.cfg.flop_weight * individual.flops / max(self.flop_reference or 1, 1)
        return score

    def grow(self, genotype: Genotype, tag: GrowthFunctionId, floor: int) -> tuple[Genotype, ChannelSchedule, int]:
        """Apply ``tag`` until the realised parameter count exceeds ``floor``."""
        for _ in range(MAX_REAPPLY):
            genotype = apply_increment(genotype, tag, self.ctx)
            schedule = realize_schedule(genotype, self.spec)
            params = param_count(self.spec, schedule)
            if params > floor:
                return genotype, schedule, params
        raise SearchError(f"mutation {tag} did not grow the network after {MAX_REAPPLY} applications")

    def mutate(self, parent: Individual, rng: np.random.Generator) -> tuple[Individual, NetworkInstance | None]:
        tag = self.cfg.pool.draw(rng)
        genotype, schedule, params = self.grow(parent.genotype, tag, parent.params)
        child = Individual(
            id=self._next_id,
            parent_id=parent.id,
            genotype=genotype,
            schedule=schedule,
            params=params,
            flops=flop_count(self.spec, schedule),
            mutation_tag=tag,
        )
        self._next_id += 1
        net = None
        if self.evaluator.needs_weights:
            if self.cfg.inherit_weights:
                net = widen_network(self.store.get(parent), schedule, self.cfg.noise, rng)
            else:
                net = materialize(self.spec, schedule, rng)
        logger.debug("Mutated %d -> %d with %s: params %d -> %d", parent.id, child.id, tag, parent.params, params)
        return child, net

    def evaluate(self, individual: Individual, net: NetworkInstance | None, rng: np.random.Generator) -> Individual:
        try:
            accuracy, trained = self.evaluator(individual, net, rng)
        except WidthSearchError as exc:
            raise SearchError(f"evaluation failed: {exc}", individual.id) from exc
        individual.assign_fitness(accuracy, self.objective(accuracy, individual))
        if trained is not None:
            self.store.put(individual, trained)
        return individual

    def seed_population(self, initial: Individual) -> Population:
        """``p1`` single mutations of the initial model, evaluated (concurrently with workers > 1)."""
        rngs = [self.streams.get("seed", index) for index in range(self.cfg.p1)]
        children = [self.mutate(initial, rng) for rng in rngs]
        jobs = [(child, net, rng) for (child, net), rng in zip(children, rngs)]
        if self.cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                list(pool.map(lambda job: self.evaluate(*job), jobs))
        else:
            for job in jobs:
                self.evaluate(*job)

        population = Population()
        for child, _ in children:
            population.add(child)
            self.log.record("seed", child, population)
        return population

    def evolve_step(self, population: Population, rng: np.random.Generator) -> Population:
        if len(population) < self.cfg.p1:
            raise InputError(f"population of {len(population)} is below p1={self.cfg.p1}")
        parent = tournament_select(population, self.cfg.k, rng)
        child, net = self.mutate(parent, rng)
        self.evaluate(child, net, rng)
        if len(population) < self.cfg.p2:
            event = "grow"
        else:
            event = "replace"
            worst = population.worst()
            population.remove(worst)
            self.store.discard(worst)
        population.add(child)
        self.log.record(event, child, population)
        return population

    def run(self) -> SearchResult:
        initial, _ = self.initial_individual()
        logger.info(
            "Search started: spec=%s slots=%d base=%d params=%d budget=%d",
            self.spec.name,
            self.spec.slot_count,
            self.base_width,
            initial.params,
            self.cfg.param_budget,
        )
        population = self.seed_population(initial)
        steps = 0
        while population.best().params < self.cfg.budget_target and steps < self.cfg.generation_cap:
            steps += 1
            self.evolve_step(population, self.streams.get("step", steps))
        best = population.best()
        reached = best.params >= self.cfg.budget_target
        if not reached:
            logger.warning(
                "Budget not reached within %d steps: best params %d < %.0f",
                self.cfg.generation_cap,
                best.params,
                self.cfg.budget_target,
            )
        logger.info("Search finished: steps=%d best=%d fitness=%.4f params=%d", steps, best.id, best.fitness, best.params)
        return SearchResult(best, population, list(self.log.rows), initial, steps, reached)


def run_search(
    spec: ArchitectureSpec,
    cfg: SearchConfig,
    fitness: FitnessEvaluator,
    streams: RandomStreams | None = None,
    store: WeightStore | None = None,
    log: RunLog | None = None,
) -> SearchResult:
    return EvolutionEngine(spec, cfg, fitness, streams, store, log).run()


def replay_schedules(
    spec: ArchitectureSpec,
    cfg: SearchConfig,
    rows: Sequence[LogEvent],
) -> dict[int, tuple[Genotype, ChannelSchedule]]:
    """Rebuild every logged individual's genotype and schedule from its lineage."""
    engine = EvolutionEngine(spec, cfg, SyntheticEvaluator(lambda ind: 0.0))
    initial, _ = engine.initial_individual()
    known: dict[int, Individual] = {0: initial}
    rebuilt: dict[int, tuple[Genotype, ChannelSchedule]] = {}
    for row in rows:
        parent = known.get(row.parent_id if row.parent_id is not None else 0)
        if parent is None:
            raise InputError(f"row {row.individual_id} references unknown parent {row.parent_id}")
        genotype, schedule, params = engine.grow(parent.genotype, GrowthFunctionId(row.mutation_tag), parent.params)
        known[row.individual_id] = Individual(row.individual_id, row.parent_id, genotype, schedule, params, 0)
        rebuilt[row.individual_id] = (genotype, schedule)
    return rebuilt
