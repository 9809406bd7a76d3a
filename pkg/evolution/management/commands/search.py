"""
Run the steady-state width search.

Configuration precedence: flags > JSON config file > settings.WIDTHSEARCH.

Usage:
    python manage.py search config.json
    python manage.py search --spec plain-cnn-6 --budget-multiple 4 --seed 3 --record
"""

from django.utils import timezone

from evolution.exceptions import WidthSearchError
from evolution.management.base import WidthSearchCommand
from evolution.models import RunStatus, SearchRun
from evolution.serializers import RunConfigSerializer
from evolution.services.architecture import flop_count
from evolution.services.checkpoint import save_checkpoint
from evolution.services.runlog import RunLog, fitness_histogram
from evolution.services.runs import (
    DatabaseRecorder,
    RunConfig,
    RunDirectory,
    load_json,
    merge_config,
    prepare_data,
    run_header,
)
from evolution.services.search import (
    CheckpointWeightStore,
    EvolutionEngine,
    RandomStreams,
    TrainingEvaluator,
    budget_distance_evaluator,
)

FLAG_KEYS = (
    "spec",
    "seed",
    "lam",
    "p1",
    "p2",
    "k",
    "child_epochs",
    "init_epochs",
    "param_budget",
    "budget_multiple",
    "reference",
    "budget_fraction",
    "generation_cap",
    "base_width",
    "workers",
    "noise_delta",
    "output_dir",
    "fitness",
    "batch_size",
    "l_max",
)


class Command(WidthSearchCommand):
    help = "Search per-layer widths by widening and steady-state evolution."

    def add_arguments(self, parser):
        parser.add_argument("config", nargs="?", help="Run configuration JSON path.")
        parser.add_argument("--spec", help="Fixture name or architecture spec JSON path.")
        parser.add_argument("--seed", type=int)
        parser.add_argument("--lam", type=float)
        parser.add_argument("--p1", type=int)
        parser.add_argument("--p2", type=int)
        parser.add_argument("--k", type=int)
        parser.add_argument("--child-epochs", type=int)
        parser.add_argument("--init-epochs", type=int)
        parser.add_argument("--param-budget", type=int)
        parser.add_argument("--budget-multiple", type=float)
        parser.add_argument("--reference", help="Reference schedule whose parameter count is the budget.")
        parser.add_argument("--budget-fraction", type=float)
        parser.add_argument("--generation-cap", type=int)
        parser.add_argument("--base-width", type=int)
        parser.add_argument("--workers", type=int)
        parser.add_argument("--noise-delta", type=float)
        parser.add_argument("--no-noise", action="store_true", help="Widen without symmetry-breaking noise.")
        parser.add_argument("--batch-size", type=int)
        parser.add_argument("--l-max", type=float)
        parser.add_argument("--output-dir")
        parser.add_argument(
            "--fitness",
            choices=["validation", "budget_distance"],
            help="budget_distance scores -|params - budget| without training.",
        )
        parser.add_argument("--bins", type=int, default=10, help="Fitness histogram bins.")
        parser.add_argument("--record", action="store_true", help="Mirror the run log into the database.")

    def handle(self, *args, **options):
        file_data = load_json(options["config"]) if options["config"] else {}
        overrides = {key: options.get(key) for key in FLAG_KEYS}
        if options["no_noise"]:
            overrides["noise"] = False
        data = self.validated(RunConfigSerializer, merge_config(file_data, overrides))
        config = RunConfig.from_validated(data)

        with RunDirectory(config.output_dir) as run:
            record = self.start_record(config, run) if options["record"] else None
            try:
                result, store = self.search(config, data["fitness"], run, record)
            except WidthSearchError as exc:
                if record is not None:
                    record.status = RunStatus.FAILED
                    record.error = str(exc)
                    record.finished_at = timezone.now()
                    record.save()
                raise
            self.write_artifacts(config, run, result, store)
            if record is not None:
                self.finish_record(record, result)

        self.print_histogram(result.log, options["bins"])
        if result.warning:
            self.stderr.write(
                f"warning: budget not reached after {result.steps} steps "
                f"(best {result.best.params:,} < {config.search.budget_target:,.0f})"
            )
        self.stdout.write(
            f"best individual {result.best.id}: fitness {result.best.fitness:.4f}, "
            f"params {result.best.params:,}, widths {list(result.best.schedule.widths)}"
        )
        self.stdout.write(f"run directory: {run.path}")

    def search(self, config, fitness, run, record):
        normalization = None
        store = None
        if fitness == "validation":
            data = prepare_data(config.dataset, config.search.seed)
            evaluator = TrainingEvaluator(data.train, data.validation, config.train, config.search.child_epochs)
            store = CheckpointWeightStore(run.checkpoints_dir, config.spec)
            normalization = data.normalization()
        else:
            evaluator = budget_distance_evaluator(config.search.param_budget)

        run.write_json(run.header_path, run_header(config, normalization, fitness=fitness))
        sinks = [DatabaseRecorder(record)] if record is not None else []
        log = RunLog(run.log_path, sinks=sinks)
        engine = EvolutionEngine(config.spec, config.search, evaluator, RandomStreams(config.search.seed), store, log)
        return engine.run(), store

    def write_artifacts(self, config, run, result, store):
        best = result.best
        run.write_json(
            run.schedule_path,
            {
                "spec": config.spec.name,
                "individual_id": best.id,
                "widths": list(best.schedule.widths),
                "params": best.params,
                "flops": flop_count(config.spec, best.schedule),
                "fitness": best.fitness,
                "accuracy": best.accuracy,
            },
        )
        run.write_json(run.genotype_path, best.genotype.to_dict())
        if store is not None:
            save_checkpoint(store.get(best), run.checkpoint_path)

    def start_record(self, config, run):
        return SearchRun.objects.create(
            spec_name=config.spec.name,
            seed=config.search.seed,
            config=config.echo,
            run_dir=str(run.path),
            param_budget=config.search.param_budget,
        )

    def finish_record(self, record, result):
        record.status = RunStatus.COMPLETED if result.budget_reached else RunStatus.BUDGET_NOT_REACHED
        record.best_individual_id = result.best.id
        record.best_fitness = result.best.fitness
        record.best_params = result.best.params
        record.best_widths = list(result.best.schedule.widths)
        record.steps = result.steps
        record.finished_at = timezone.now()
        record.save()

    def print_histogram(self, rows, bins):
        edges, percentages = fitness_histogram(rows, bins)
        if not percentages:
            return
        seeded = next((i for i, row in enumerate(rows) if row.event != "seed"), len(rows)) - 1
        self.stdout.write("fitness range            seeded    final")
        for index in range(len(edges) - 1):
            self.stdout.write(
                f"[{edges[index]:>9.4f}, {edges[index + 1]:>9.4f})"
                f"{percentages[seeded][index]:>8.1f}%{percentages[-1][index]:>8.1f}%"
            )
