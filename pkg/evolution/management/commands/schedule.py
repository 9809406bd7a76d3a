"""
Print the per-layer widths, parameter count and FLOPs of a schedule.

Usage:
    python manage.py schedule resnet18 --schedule resnet18-modified-2
    python manage.py schedule plain-cnn-6 --genotype best_genotype.json --reference original.json
"""

from pathlib import Path

from evolution.exceptions import InputError
from evolution.management.base import WidthSearchCommand
from evolution.serializers import GenotypeSerializer, ScheduleSerializer
from evolution.services.architecture import (
    ArchitectureSpec,
    ChannelSchedule,
    default_base_width,
    flop_breakdown,
    param_breakdown,
    validate_schedule,
)
from evolution.services.growth import realize_schedule
from evolution.services.runs import load_json, resolve_schedule, resolve_spec


def layer_table(spec: ArchitectureSpec, schedule: ChannelSchedule) -> list[dict]:
    params = param_breakdown(spec, schedule)
    rows = []
    for label, flops in flop_breakdown(spec, schedule).items():
        width = schedule.widths[int(label[4:]) - 1] if label.startswith("conv") else None
        rows.append(
            {
                "layer": label,
                "width": width,
                "params": sum(v for k, v in params.items() if k.startswith(f"{label}.")),
                "flops": flops,
            }
        )
    return rows


def summarize(spec: ArchitectureSpec, schedule: ChannelSchedule) -> dict:
    validate_schedule(spec, schedule)
    layers = layer_table(spec, schedule)
    return {
        "spec": spec.name,
        "widths": list(schedule.widths),
        "slot_widths": list(spec.slot_widths(schedule)),
        "params": sum(row["params"] for row in layers),
        "flops": sum(row["flops"] for row in layers),
        "layers": layers,
    }


class Command(WidthSearchCommand):
    help = "Show the widths, parameters and FLOPs of a genotype or schedule."

    def add_arguments(self, parser):
        parser.add_argument("spec", help="Fixture name or architecture spec JSON path.")
        source = parser.add_mutually_exclusive_group()
        source.add_argument("--genotype", help="Genotype JSON path.")
        source.add_argument("--schedule", help="Schedule JSON path, reference name or comma-separated widths.")
        source.add_argument("--uniform", type=int, help="One width for every slot.")
        parser.add_argument("--reference", help="Schedule to compare against (same forms as --schedule).")
        parser.add_argument("--output", help="Also write the JSON report to this path.")
        parser.add_argument("--json", action="store_true", help="Print only the JSON report.")

    def handle(self, *args, **options):
        spec = resolve_spec(options["spec"])
        payload = {}
        if options["genotype"]:
            genotype = self.load_genotype(options["genotype"], spec)
            schedule = realize_schedule(genotype, spec)
            payload["genotype"] = genotype.to_dict()
        elif options["schedule"]:
            schedule = self.parse_schedule(options["schedule"], spec)
        else:
            width = options["uniform"] or default_base_width(spec)
            schedule = spec.expand([width] * spec.slot_count)

        payload.update(summarize(spec, schedule))
        if options["reference"]:
            reference = summarize(spec, self.parse_schedule(options["reference"], spec))
            payload["reference"] = {
                "widths": reference["widths"],
                "params": reference["params"],
                "flops": reference["flops"],
                "params_ratio": payload["params"] / reference["params"],
                "flops_ratio": payload["flops"] / reference["flops"],
            }

        if not options["json"]:
            self.print_table(payload)
        self.emit_json(payload)
        if options["output"]:
            Path(options["output"]).write_text(self.json_text(payload))

    def load_genotype(self, path, spec):
        data = load_json(path, "genotype")
        if not isinstance(data, dict):
            raise InputError(f"genotype file {path} must hold a JSON object")
        serializer = self.valid_serializer(GenotypeSerializer, data)
        widths = serializer.validated_data["base_widths"]
        if len(widths) != spec.slot_count:
            raise InputError(f"genotype has {len(widths)} widths, {spec.name} has {spec.slot_count} slots")
        return serializer.to_genotype(spec)

    def parse_schedule(self, value, spec):
        if "," in value or value.isdigit():
            try:
                widths = [int(w) for w in value.split(",") if w.strip()]
            except ValueError as exc:
                raise InputError(f"malformed width list {value!r}") from exc
            self.validated(ScheduleSerializer, {"widths": widths})
            return ChannelSchedule(tuple(widths))
        return resolve_schedule(value, spec)

    def print_table(self, payload):
        self.stdout.write(f"{'layer':<14}{'width':>8}{'params':>14}{'flops':>16}")
        for row in payload["layers"]:
            width = "" if row["width"] is None else row["width"]
            self.stdout.write(f"{row['layer']:<14}{width:>8}{row['params']:>14,}{row['flops']:>16,}")
        self.stdout.write(f"{'total':<14}{'':>8}{payload['params']:>14,}{payload['flops']:>16,}")
        if "reference" in payload:
            ref = payload["reference"]
            self.stdout.write(
                f"reference: params {ref['params']:,} ({ref['params_ratio']:.3f}x) "
                f"flops {ref['flops']:,} ({ref['flops_ratio']:.3f}x)"
            )
