"""
Train a schedule on the full training set and report test accuracy.

Usage:
    python manage.py eval config.json --schedule runs/plain-cnn-6-seed0/best_schedule.json --epochs 31
    python manage.py eval --spec plain-cnn-6 --checkpoint runs/plain-cnn-6-seed0/best.ckpt \
        --schedule runs/plain-cnn-6-seed0/best_schedule.json --epochs 0
"""

from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

from evolution.management.base import WidthSearchCommand
from evolution.serializers import RunConfigSerializer
from evolution.services.architecture import materialize, param_count, validate_schedule
from evolution.services.checkpoint import restore_checkpoint, save_checkpoint
from evolution.services.datasets import channel_stats, normalize
from evolution.services.runs import (
    RunDirectory,
    dataset_source,
    load_json,
    merge_config,
    resolve_schedule,
    resolve_spec,
    train_config,
)
from evolution.services.search import RandomStreams
from evolution.services.training import evaluate_accuracy, train

FLAG_KEYS = ("spec", "seed", "batch_size", "l_max", "momentum", "output_dir")


class Command(WidthSearchCommand):
    help = "Train a width schedule to the configured epoch budget and report test accuracy."

    def add_arguments(self, parser):
        parser.add_argument("config", nargs="?", help="Run configuration JSON path (dataset and training keys).")
        parser.add_argument("--spec", help="Fixture name or architecture spec JSON path.")
        parser.add_argument("--schedule", required=True, help="Schedule JSON path or reference name.")
        parser.add_argument("--checkpoint", help="Start from these weights instead of a fresh initialisation.")
        parser.add_argument("--epochs", type=int, default=None, help="Training epochs (default: child_epochs).")
        parser.add_argument("--seed", type=int)
        parser.add_argument("--batch-size", type=int)
        parser.add_argument("--momentum", type=float)
        parser.add_argument("--l-max", type=float)
        parser.add_argument("--output-dir")

    def handle(self, *args, **options):
        file_data = load_json(options["config"]) if options["config"] else {}
        overrides = {key: options.get(key) for key in FLAG_KEYS}
        data = self.validated(RunConfigSerializer, merge_config(file_data, overrides))

        spec = resolve_spec(data["spec"])
        schedule = resolve_schedule(options["schedule"], spec)
        validate_schedule(spec, schedule)
        epochs = data["child_epochs"] if options["epochs"] is None else options["epochs"]
        cfg = replace(train_config(data), epochs=epochs)
        source = dataset_source(data)
        streams = RandomStreams(data["seed"])

        net = materialize(spec, schedule, streams.get("init"))
        if options["checkpoint"]:
            restore_checkpoint(net, options["checkpoint"])

        train_set = source.load()
        means, stds = channel_stats(train_set)
        train_set = normalize(train_set, means, stds)
        test_set = normalize(source.load_test(), means, stds)

        output = data.get("output_dir")
        if output is None:
            output = Path(options["checkpoint"]).parent if options["checkpoint"] else (
                Path(data["run_root"]) / f"{spec.name}-eval-seed{data['seed']}"
            )

        with RunDirectory(output) as run:
            trace = []
            if epochs:
                net, trace = train(net, train_set, cfg, streams.get("eval-train"))
            accuracy = evaluate_accuracy(net, test_set)
            save_checkpoint(net, run.path / "eval.ckpt")
            run.write_json(
                run.eval_header_path,
                {
                    "created_at": datetime.now(timezone.utc).isoformat(),
                    "seed": data["seed"],
                    "spec": spec.to_dict(),
                    "widths": list(schedule.widths),
                    "params": param_count(spec, schedule),
                    "checkpoint": options["checkpoint"],
                    "train": asdict(cfg),
                    "normalization": {
                        "source": "training set",
                        "means": [float(m) for m in means],
                        "stds": [float(s) for s in stds],
                    },
                    "loss_trace": trace,
                    "train_size": len(train_set),
                    "test_size": len(test_set),
                    "test_accuracy": accuracy,
                },
            )

        chance = 1.0 / source.class_count
        self.stdout.write(f"test accuracy {accuracy:.4f} (chance {chance:.4f}) after {epochs} epochs")
        self.stdout.write(f"eval header: {run.eval_header_path}")
