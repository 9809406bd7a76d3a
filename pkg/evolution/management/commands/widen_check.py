"""
Check that widening preserves the network function.

Builds a seeded random network, applies every growth function once and
reports the largest logit deviation over ``--trials`` random input batches.
With noise disabled any deviation above the tolerance fails the command.

Usage:
    python manage.py widen_check plain-cnn --trials 100
    python manage.py widen_check residual-toy --noise-delta 0.05
"""

from pathlib import Path

import numpy as np

from evolution.exceptions import WidthSearchError
from evolution.management.base import WidthSearchCommand
from evolution.services.architecture import build_initial_model, default_base_width
from evolution.services.growth import ALL_FUNCTIONS, Genotype, GrowthContext
from evolution.services.runs import resolve_spec
from evolution.services.search import RandomStreams
from evolution.services.widen import NoiseSpec, preservation_report, randomize_batchnorm

TOLERANCES = {"float32": 1e-5, "float64": 1e-10}


class PreservationFailure(WidthSearchError):
    code = "preservation_failure"


class Command(WidthSearchCommand):
    help = "Report the max output deviation of each single-mutation widening."

    def add_arguments(self, parser):
        parser.add_argument("spec", help="Fixture name or architecture spec JSON path.")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--trials", type=int, default=100)
        parser.add_argument("--base-width", type=int, default=None)
        parser.add_argument("--lam", type=float, default=0.2)
        parser.add_argument("--noise-delta", type=float, default=0.0, help="δ_max; deviations are not failed when > 0.")
        parser.add_argument("--dtype", choices=sorted(TOLERANCES), default="float32")
        parser.add_argument("--tolerance", type=float, default=None)
        parser.add_argument("--batch-size", type=int, default=4)
        parser.add_argument("--output", help="Also write the JSON report to this path.")

    def handle(self, *args, **options):
        spec = resolve_spec(options["spec"])
        streams = RandomStreams(options["seed"])
        base = options["base_width"] or default_base_width(spec)
        net = build_initial_model(spec, base, streams.get("init"), dtype=np.dtype(options["dtype"]))
        randomize_batchnorm(net, streams.get("batchnorm"))

        noise = NoiseSpec(delta_max=options["noise_delta"], enabled=options["noise_delta"] > 0)
        tolerance = options["tolerance"] or TOLERANCES[options["dtype"]]
        report = preservation_report(
            net,
            Genotype.initial([base] * spec.slot_count, lam=options["lam"]),
            GrowthContext.for_spec(spec, options["lam"]),
            options["trials"],
            noise,
            streams.get("widen-check"),
            ALL_FUNCTIONS,
            batch_size=options["batch_size"],
        )

        failed = [tag for tag, deviation in report.items() if deviation > tolerance]
        for tag, deviation in report.items():
            marker = "FAIL" if tag in failed and not noise.active else "ok"
            self.stdout.write(f"{tag:<6}{deviation:>14.3e}  {marker}")
        payload = {
            "spec": spec.name,
            "seed": options["seed"],
            "trials": options["trials"],
            "dtype": options["dtype"],
            "noise_delta": noise.delta_max if noise.active else 0.0,
            "tolerance": tolerance,
            "deviations": report,
        }
        self.emit_json(payload)
        if options["output"]:
            Path(options["output"]).write_text(self.json_text(payload))

        if failed and not noise.active:
            raise PreservationFailure(f"deviation above {tolerance:g} for {', '.join(failed)}")
