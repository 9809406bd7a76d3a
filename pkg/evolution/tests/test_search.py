import itertools
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from evolution.exceptions import InputError, SearchError
from evolution.services.architecture import ChannelSchedule, build_initial_model, param_count
from evolution.services.datasets import channel_stats, normalize, stratified_split, synthetic_dataset
from evolution.services.fixtures import REFERENCE_SCHEDULES, fixture_spec
from evolution.services.growth import Genotype, MutationPool
from evolution.services.runlog import RunLog, read_run_log
from evolution.services.search import (
    CheckpointWeightStore,
    EvolutionEngine,
    Individual,
    MemoryWeightStore,
    Population,
    RandomStreams,
    SearchConfig,
    TrainingEvaluator,
    budget_distance_evaluator,
    replay_schedules,
    run_search,
    tournament_select,
)
from evolution.services.training import TrainConfig, evaluate_accuracy
from evolution.services.widen import NoiseSpec


def member(id_, fitness, params=100):
    ind = Individual(id_, None, Genotype.initial([4.0]), ChannelSchedule((4,)), params, 0)
    ind.fitness = fitness
    ind.accuracy = fitness
    return ind


def open_budget_config(**overrides):
    cfg = SearchConfig(lam=0.2, p1=12, p2=20, k=3, param_budget=10**12, generation_cap=30, seed=4)
    return replace(cfg, **overrides)


def test_search_config_rejects_bad_population_sizes():
    with pytest.raises(InputError):
        SearchConfig(p1=5, p2=4)
    with pytest.raises(InputError):
        SearchConfig(k=6, p1=5, p2=8)


def test_search_config_rejects_bad_budget_fraction():
    with pytest.raises(InputError):
        SearchConfig(budget_fraction=1.5)


def test_population_best_and_worst_break_ties_by_id():
    pop = Population([member(1, 0.5), member(2, 0.5), member(3, 0.9), member(4, 0.9)])
    assert pop.best().id == 3
    assert pop.worst().id == 2


def test_tournament_with_full_population_returns_best():
    pop = Population([member(i, f) for i, f in enumerate([0.1, 0.7, 0.3, 0.7], start=1)])
    assert tournament_select(pop, 4, np.random.default_rng(0)).id == 2


def test_tournament_rejects_oversized_k():
    with pytest.raises(InputError):
        tournament_select(Population([member(1, 0.1)]), 2, np.random.default_rng(0))


def test_tournament_of_one_is_uniform():
    pop = Population([member(i, float(i)) for i in range(1, 5)])
    rng = np.random.default_rng(0)
    picks = {tournament_select(pop, 1, rng).id for _ in range(200)}
    assert picks == {1, 2, 3, 4}


TOURNAMENT_FITNESSES = [0.1, 0.9, 0.3, 0.5, 0.7]


def test_tournament_replays_under_seed():
    pop = Population([member(i, f) for i, f in enumerate(TOURNAMENT_FITNESSES, start=1)])
    for seed in range(50):
        picked = np.random.default_rng(seed).choice(5, size=3, replace=False)
        expected = max(picked, key=lambda index: TOURNAMENT_FITNESSES[index]) + 1
        assert tournament_select(pop, 3, np.random.default_rng(seed)).id == expected


def test_tournament_win_rates_match_exhaustive_enumeration():
    pop = Population([member(i, f) for i, f in enumerate(TOURNAMENT_FITNESSES, start=1)])
    subsets = list(itertools.combinations(range(5), 3))
    exact = Counter(max(s, key=lambda index: TOURNAMENT_FITNESSES[index]) + 1 for s in subsets)
    rng = np.random.default_rng(6)
    trials = 10_000
    observed = Counter(tournament_select(pop, 3, rng).id for _ in range(trials))
    # the two weakest members can never win a 3-of-5 tournament
    assert set(observed) == set(exact) == {2, 4, 5}
    for id_, wins in exact.items():
        assert abs(observed[id_] / trials - wins / len(subsets)) <= 0.02


def test_fitness_cannot_be_assigned_twice():
    ind = member(1, 0.5)
    with pytest.raises(SearchError):
        ind.assign_fitness(0.6, 0.6)


def test_random_streams_are_reproducible_and_independent():
    streams = RandomStreams(9)
    a = streams.get("seed", 0).random(3)
    np.testing.assert_array_equal(a, RandomStreams(9).get("seed", 0).random(3))
    assert not np.array_equal(a, streams.get("seed", 1).random(3))
    assert not np.array_equal(a, RandomStreams(10).get("seed", 0).random(3))


def test_population_grows_to_capacity_then_stays_constant(toy_spec):
    result = run_search(toy_spec, open_budget_config(), budget_distance_evaluator(10**12))
    sizes = [row.population_size for row in result.log]
    assert sizes[:12] == list(range(1, 13))
    assert sizes[12:20] == list(range(13, 21))
    assert set(sizes[20:]) == {20}
    assert len(result.population) == 20
    assert [row.event for row in result.log[:12]] == ["seed"] * 12
    assert {row.event for row in result.log[12:20]} == {"grow"}
    assert {row.event for row in result.log[20:]} == {"replace"}
    assert result.steps == 30


def test_best_fitness_never_decreases(toy_spec):
    result = run_search(toy_spec, open_budget_config(), budget_distance_evaluator(10**12))
    best = [row.best_fitness for row in result.log]
    assert best == sorted(best)


def test_children_are_strictly_larger_than_parents(toy_spec):
    result = run_search(toy_spec, open_budget_config(), budget_distance_evaluator(10**12))
    params = {0: result.initial.params}
    for row in result.log:
        params[row.individual_id] = row.params
        assert row.params > params[row.parent_id]


def test_same_seed_replays_identically(toy_spec):
    first = run_search(toy_spec, open_budget_config(), budget_distance_evaluator(10**12))
    second = run_search(toy_spec, open_budget_config(), budget_distance_evaluator(10**12))
    assert [row.without_wallclock() for row in first.log] == [row.without_wallclock() for row in second.log]


def test_different_seed_changes_the_run(toy_spec):
    first = run_search(toy_spec, open_budget_config(), budget_distance_evaluator(10**12))
    second = run_search(toy_spec, open_budget_config(seed=5), budget_distance_evaluator(10**12))
    assert [row.without_wallclock() for row in first.log] != [row.without_wallclock() for row in second.log]


def test_replay_rebuilds_every_schedule(toy_spec):
    cfg = open_budget_config()
    result = run_search(toy_spec, cfg, budget_distance_evaluator(10**12))
    rebuilt = replay_schedules(toy_spec, cfg, result.log)
    assert set(rebuilt) == {row.individual_id for row in result.log}
    for ind in result.population:
        genotype, schedule = rebuilt[ind.id]
        assert schedule == ind.schedule
        assert genotype.history == ind.genotype.history


def test_run_log_file_matches_memory(toy_spec, tmp_path):
    path = tmp_path / "log.csv"
    result = run_search(toy_spec, open_budget_config(generation_cap=5), budget_distance_evaluator(10**12), log=RunLog(path))
    assert [row.without_wallclock() for row in read_run_log(path)] == [row.without_wallclock() for row in result.log]


def test_budget_distance_search_converges_on_budget():
    spec = fixture_spec("resnet18")
    budget = param_count(spec, REFERENCE_SCHEDULES["resnet18-modified-2"][1])
    assert budget == 9_927_226
    cfg = SearchConfig(base_width=32, param_budget=budget, generation_cap=200, seed=0)
    assert cfg.lam == 0.2
    result = run_search(spec, cfg, budget_distance_evaluator(budget))
    assert result.budget_reached
    assert not result.warning
    assert abs(result.best.params - budget) / budget <= 0.05
    assert result.steps <= 200
    assert len(result.log) == cfg.p1 + result.steps


def test_unreachable_budget_stops_at_cap_with_warning(toy_spec):
    result = run_search(toy_spec, open_budget_config(generation_cap=3), budget_distance_evaluator(10**12))
    assert result.steps == 3
    assert result.warning


def test_zero_generation_cap_returns_seeded_population(toy_spec):
    result = run_search(toy_spec, open_budget_config(generation_cap=0), budget_distance_evaluator(10**12))
    assert len(result.population) == 12
    assert result.steps == 0


def test_single_function_pool_only_uses_that_function(toy_spec):
    cfg = open_budget_config(pool=MutationPool(("G",)), generation_cap=5)
    result = run_search(toy_spec, cfg, budget_distance_evaluator(10**12))
    assert {row.mutation_tag for row in result.log} == {"G"}


def test_param_penalty_lowers_fitness(toy_spec):
    plain = EvolutionEngine(toy_spec, open_budget_config(), budget_distance_evaluator(10**12))
    penalised = EvolutionEngine(toy_spec, open_budget_config(param_weight=0.5), budget_distance_evaluator(10**12))
    ind = member(1, 0.0, params=1000)
    assert penalised.objective(0.8, ind) < plain.objective(0.8, ind) == 0.8


def test_checkpoint_store_round_trip(toy_spec, tmp_path):
    store = CheckpointWeightStore(tmp_path, toy_spec)
    net = build_initial_model(toy_spec, 4, seed=0)
    ind = Individual(1, 0, Genotype.initial([4, 4, 4]), net.schedule, net.param_count(), 0)
    store.put(ind, net)
    assert ind.checkpoint.exists()
    restored = store.get(ind)
    np.testing.assert_array_equal(restored.leaf("conv2").weight, net.leaf("conv2").weight)
    path = ind.checkpoint
    store.discard(ind)
    assert not path.exists()
    assert ind.checkpoint is None


def test_memory_store_missing_weights_raise():
    with pytest.raises(SearchError):
        MemoryWeightStore().get(member(7, 0.0))


@pytest.mark.slow
def test_training_search_inherits_weights(toy_spec):
    data = synthetic_dataset(seed=0, count=120, classes=4, dims=toy_spec.input_dims)
    train_set, validation = stratified_split(data, 24, seed=0)
    means, stds = channel_stats(train_set)
    train_set, validation = normalize(train_set, means, stds), normalize(validation, means, stds)
    train_cfg = TrainConfig(batch_size=32, augment=False)
    evaluator = TrainingEvaluator(train_set, validation, train_cfg, epochs=1)
    cfg = SearchConfig(
        p1=2, p2=3, k=1, child_epochs=1, init_epochs=1, base_width=4,
        param_budget=10**9, generation_cap=2, seed=1, noise=NoiseSpec(delta_max=0.02),
    )
    store = MemoryWeightStore()
    result = run_search(toy_spec, cfg, evaluator, store=store)
    assert len(result.population) == 3
    for ind in result.population:
        assert 0.0 <= ind.accuracy <= 1.0
        assert store.get(ind).widths() == ind.schedule.widths


def _desk_evaluator(spec, epochs=1):
    data = synthetic_dataset(seed=0, count=120, classes=4, dims=spec.input_dims)
    train_set, validation = stratified_split(data, 40, seed=0)
    means, stds = channel_stats(train_set)
    train_set, validation = normalize(train_set, means, stds), normalize(validation, means, stds)
    return TrainingEvaluator(train_set, validation, TrainConfig(batch_size=32), epochs=epochs), validation


def test_noise_free_child_scores_like_its_parent(toy_spec):
    evaluator, validation = _desk_evaluator(toy_spec)
    cfg = SearchConfig(p1=2, p2=3, k=1, init_epochs=1, base_width=8, param_budget=10**9, noise=NoiseSpec.off())
    engine = EvolutionEngine(toy_spec, cfg, evaluator)
    parent, parent_net = engine.initial_individual()
    parent_accuracy = evaluate_accuracy(parent_net, validation)
    for index in range(3):
        child, child_net = engine.mutate(parent, np.random.default_rng(index))
        assert child.params > parent.params
        assert child_net.widths() == child.schedule.widths
        assert abs(evaluate_accuracy(child_net, validation) - parent_accuracy) <= 1e-6


def test_concurrent_seeding_matches_serial_seeding(toy_spec):
    serial = run_search(toy_spec, open_budget_config(generation_cap=4), budget_distance_evaluator(10**12))
    threaded = run_search(toy_spec, open_budget_config(generation_cap=4, workers=4), budget_distance_evaluator(10**12))
    assert [row.without_wallclock() for row in threaded.log] == [row.without_wallclock() for row in serial.log]


@pytest.mark.slow
def test_concurrent_training_seeding_matches_serial_seeding(toy_spec):
    logs = []
    for workers in (1, 3):
        evaluator, _ = _desk_evaluator(toy_spec)
        cfg = SearchConfig(p1=3, p2=4, k=1, child_epochs=1, init_epochs=1, base_width=4, param_budget=10**9, generation_cap=1, seed=2, workers=workers)
        result = run_search(toy_spec, cfg, evaluator)
        logs.append([row.without_wallclock() for row in result.log])
    assert logs[0] == logs[1]
