"""Run configuration, run directories and run headers for the commands.

Configuration precedence is flags > JSON file > ``settings.WIDTHSEARCH``.
A run directory is owned by one process at a time through an exclusive
lock file.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
from django.conf import settings

from ..exceptions import FormatError, InputError, flatten_errors
from .architecture import ArchitectureSpec, ChannelSchedule, default_base_width, param_count
from .datasets import LabeledDataset, channel_stats, load_binary_dataset, normalize, stratified_split, synthetic_dataset
from .fixtures import FIXTURE_SPECS, REFERENCE_SCHEDULES, fixture_spec
from .growth import AccountingMode, MutationPool
from .search import SearchConfig
from .training import TrainConfig
from .widen import NoiseSpec

logger = logging.getLogger(__name__)

LOCK_NAME = ".lock"

SEARCH_KEYS = (
    "lam",
    "p1",
    "p2",
    "k",
    "child_epochs",
    "init_epochs",
    "budget_fraction",
    "generation_cap",
    "seed",
    "base_width",
    "inherit_weights",
    "param_weight",
    "flop_weight",
    "workers",
)
TRAIN_KEYS = (
    "batch_size",
    "momentum",
    "l_max",
    "T0",
    "T_mult",
    "weight_decay",
    "warmup_epochs",
    "augment",
    "pad",
    "flip",
    "cutout",
)


def load_json(path: str | Path, what: str = "config") -> Any:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InputError(f"{what} file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{what} file {path} is not valid JSON: {exc}") from exc


def merge_config(file_data: dict | None, overrides: dict | None) -> dict:
    """Defaults from settings, then the file, then non-None flag values."""
    merged = dict(settings.WIDTHSEARCH)
    merged.update(file_data or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return merged


def resolve_spec(value: str | dict) -> ArchitectureSpec:
    """A fixture name, a path to a spec JSON file, or an inline spec dict."""
    if isinstance(value, str) and value in FIXTURE_SPECS:
        return fixture_spec(value)
    from ..serializers import ArchitectureSpecSerializer

    data = value if isinstance(value, dict) else load_json(value, "spec")
    serializer = ArchitectureSpecSerializer(data=data)
    if not serializer.is_valid():
        raise InputError(f"invalid architecture spec: {flatten_errors(serializer.errors)}")
    return serializer.to_spec()


def resolve_schedule(value: str | list, spec: ArchitectureSpec | None = None) -> ChannelSchedule:
    """A reference schedule name, a schedule JSON path or an inline width list."""
    if isinstance(value, list):
        return ChannelSchedule(tuple(value))
    if value in REFERENCE_SCHEDULES:
        fixture, schedule, _ = REFERENCE_SCHEDULES[value]
        if spec is not None and len(schedule) != spec.conv_count:
            raise InputError(f"reference {value!r} belongs to {fixture}, not {spec.name}")
        return schedule
    return ChannelSchedule.load(value)


@dataclass(frozen=True)
class DatasetSource:
    kind: str = "synthetic"
    paths: tuple[str, ...] = ()
    test_paths: tuple[str, ...] = ()
    class_count: int = 10
    seed: int = 0
    count: int = 2000
    test_count: int = 500
    dims: tuple[int, int, int] = (16, 16, 3)
    holdout: int | None = None

    def __post_init__(self):
        if self.kind not in ("synthetic", "binary"):
            raise InputError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "binary":
            if not self.paths:
                raise InputError("binary datasets need at least one path")
            for path in (*self.paths, *self.test_paths):
                if not Path(path).exists():
                    raise InputError(f"dataset file not found: {path}")

    def load(self) -> LabeledDataset:
        if self.kind == "binary":
            return load_binary_dataset(self.paths, self.class_count)
        return synthetic_dataset(self.seed, self.count, self.class_count, self.dims)

    def load_test(self) -> LabeledDataset:
        if self.kind == "binary":
            if not self.test_paths:
                raise InputError("binary datasets need test_paths for evaluation")
            return load_binary_dataset(self.test_paths, self.class_count)
        return synthetic_dataset(self.seed + 1, self.test_count, self.class_count, self.dims)

    def holdout_for(self, count: int) -> int:
        # One fifth by default: 10 000 of 50 000 training images.
        return count // 5 if self.holdout is None else self.holdout


@dataclass(frozen=True)
class PreparedData:
    train: LabeledDataset
    validation: LabeledDataset
    means: tuple[float, ...]
    stds: tuple[float, ...]

    def normalization(self) -> dict:
        return {"source": "training split", "means": list(self.means), "stds": list(self.stds)}


def prepare_data(source: DatasetSource, seed: int) -> PreparedData:
    """Stratified split, then normalise both parts with training-split statistics."""
    data = source.load()
    train, validation = stratified_split(data, source.holdout_for(len(data)), seed)
    means, stds = channel_stats(train)
    train = normalize(train, means, stds)
    if len(validation):
        validation = normalize(validation, means, stds)
    logger.info("Data prepared: train=%d validation=%d", len(train), len(validation))
    return PreparedData(train, validation, tuple(float(m) for m in means), tuple(float(s) for s in stds))


@dataclass(frozen=True)
class RunConfig:
    spec: ArchitectureSpec
    search: SearchConfig
    train: TrainConfig
    dataset: DatasetSource
    output_dir: Path
    echo: dict = field(default_factory=dict)

    @classmethod
    def from_validated(cls, data: dict) -> RunConfig:
        spec = resolve_spec(data["spec"])
        search_fields = {key: data[key] for key in SEARCH_KEYS if data.get(key) is not None}
        search_fields["param_budget"] = resolve_budget(spec, data)
        search_fields["mode"] = AccountingMode(data.get("mode", AccountingMode.COMPOUND))
        if data.get("pool"):
            search_fields["pool"] = MutationPool(tuple(data["pool"]))
        search_fields["noise"] = NoiseSpec(
            delta_max=data.get("noise_delta", 0.05),
            enabled=data.get("noise", True),
            per_filter=data.get("noise_per_filter", False),
        )
        output = data.get("output_dir") or Path(data["run_root"]) / f"{spec.name}-seed{data.get('seed', 0)}"
        return cls(
            spec=spec,
            search=SearchConfig(**search_fields),
            train=train_config(data),
            dataset=dataset_source(data),
            output_dir=Path(output),
            echo=_jsonable(data),
        )


def train_config(data: dict) -> TrainConfig:
    return TrainConfig(**{key: data[key] for key in TRAIN_KEYS if data.get(key) is not None})


def dataset_source(data: dict) -> DatasetSource:
    dataset = dict(data.get("dataset") or {})
    return DatasetSource(
        **{
            **dataset,
            "paths": tuple(dataset.get("paths", ())),
            "test_paths": tuple(dataset.get("test_paths", ())),
            "dims": tuple(dataset.get("dims", (16, 16, 3))),
        }
    )


def resolve_budget(spec: ArchitectureSpec, data: dict) -> int:
    """``param_budget``, else a reference schedule's count, else a multiple of the initial model."""
    if data.get("param_budget"):
        return int(data["param_budget"])
    if data.get("reference"):
        return param_count(spec, resolve_schedule(data["reference"], spec))
    if data.get("budget_multiple"):
        base = data.get("base_width") or default_base_width(spec)
        initial = spec.expand([base] * spec.slot_count)
        return int(round(float(data["budget_multiple"]) * param_count(spec, initial)))
    raise InputError("set one of param_budget, reference or budget_multiple")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, np.generic):
        return value.item()
    return value


class RunDirectory:
    """Exclusive owner of one run directory while the context is open."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.lock_path = self.path / LOCK_NAME
        self._fd: int | None = None

    def __enter__(self) -> RunDirectory:
        self.path.mkdir(parents=True, exist_ok=True)
        try:
            self._fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise InputError(f"run directory {self.path} is locked by another process ({self.lock_path})") from None
        os.write(self._fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc_info) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
            self.lock_path.unlink(missing_ok=True)

    @property
    def log_path(self) -> Path:
        return self.path / "run_log.csv"

    @property
    def header_path(self) -> Path:
        return self.path / "run_header.json"

    @property
    def schedule_path(self) -> Path:
        return self.path / "best_schedule.json"

    @property
    def genotype_path(self) -> Path:
        return self.path / "best_genotype.json"

    @property
    def checkpoint_path(self) -> Path:
        return self.path / "best.ckpt"

    @property
    def eval_header_path(self) -> Path:
        return self.path / "eval_header.json"

    @property
    def checkpoints_dir(self) -> Path:
        return self.path / "checkpoints"

    def write_json(self, path: Path, payload: Any) -> Path:
        path.write_text(json.dumps(_jsonable(payload), indent=2))
        return path


def run_header(config: RunConfig, normalization: dict | None = None, **extra) -> dict:
    return {
        "created_at": datetime.now(timezone.utc).isoformat(),
        "seed": config.search.seed,
        "spec": config.spec.to_dict(),
        "config": config.echo,
        "search": {**asdict(config.search), "pool": [str(f) for f in config.search.pool.functions]},
        "train": asdict(config.train),
        "normalization": normalization,
        **extra,
    }


class DatabaseRecorder:
    """Run-log sink mirroring every event into ``IndividualRecord`` rows."""

    def __init__(self, run):
        self.run = run

    def __call__(self, row, individual) -> None:
        from ..models import IndividualRecord

        IndividualRecord.objects.create(
            run=self.run,
            individual_id=row.individual_id,
            parent_id=row.parent_id,
            event=row.event,
            mutation_tag=row.mutation_tag,
            params=row.params,
            fitness=row.fitness,
            best_fitness=row.best_fitness,
            population_size=row.population_size,
            widths=list(individual.schedule.widths),
            wallclock_s=row.wallclock_s,
        )
