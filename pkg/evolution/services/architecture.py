"""Symbolic architectures: layer descriptors, width schedules, counting, materialisation.

A *searchable* convolution is any convolution whose width the search decides
(plain convolutions and the convolutions inside residual blocks). Stem
convolutions and projection shortcuts are not searchable: the stem has a fixed
width and a projection always takes the width of its block's last convolution.

Width *slots* are the free variables of the search. Every searchable
convolution is its own slot, except inside bottleneck blocks where one slot
drives three convolutions in the ratio 1:1:4.
"""

from __future__ import annotations

import json
from collections.abc import Iterator, Sequence
from dataclasses import asdict, dataclass, field
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return str(self.value)

        def __format__(self, format_spec: str) -> str:
            return str(self.value).__format__(format_spec)

        @staticmethod
        def _generate_next_value_(name, start, count, last_values):
            return name.lower()
from pathlib import Path

import numpy as np

from ..exceptions import FormatError, InputError
from .tensor import (
    ConvUnit,
    Dense,
    Dropout,
    GlobalAvgPool,
    Layer,
    NetworkInstance,
    Pool,
    Residual,
    conv_output_size,
)

BOTTLENECK_RATIOS = (1, 1, 4)


class LayerKind(StrEnum):
    STEM = "stem"
    CONV = "conv"
    BLOCK = "block"
    BOTTLENECK = "bottleneck"
    POOL = "pool"
    DROPOUT = "dropout"
    DENSE = "dense"


class ShortcutKind(StrEnum):
    NONE = "none"
    PROJECTION = "projection"
    # Identity where shapes allow, projection otherwise.
    IDENTITY = "identity"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    kernel: int = 3
    stride: int = 1
    shortcut: ShortcutKind = ShortcutKind.NONE
    width: int | None = None
    pool: str = "max"
    rate: float = 0.0

    @property
    def downsample(self) -> bool:
        return self.kind == LayerKind.POOL or self.stride > 1

    @property
    def conv_count(self) -> int:
        """Searchable convolutions contributed by this layer."""
        return {LayerKind.CONV: 1, LayerKind.BLOCK: 2, LayerKind.BOTTLENECK: 3}.get(self.kind, 0)

    def unit_shapes(self) -> list[tuple[int, int]]:
        """``(kernel, stride)`` of each searchable convolution in the layer."""
        if self.kind == LayerKind.CONV:
            return [(self.kernel, self.stride)]
        if self.kind == LayerKind.BLOCK:
            return [(self.kernel, self.stride), (self.kernel, 1)]
        if self.kind == LayerKind.BOTTLENECK:
            return [(1, 1), (self.kernel, self.stride), (1, 1)]
        return []


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    input_dims: tuple[int, int, int] = (32, 32, 3)
    classes: int = 10

    def __post_init__(self):
        if self.conv_count < 1:
            raise InputError(f"{self.name}: an architecture needs at least one searchable convolution")
        if self.classes < 1:
            raise InputError(f"{self.name}: classes must be >= 1")
        if any(d < 1 for d in self.input_dims):
            raise InputError(f"{self.name}: input dims must be positive")
        seen_dense = False
        for layer in self.layers:
            if layer.kind == LayerKind.DENSE:
                if not layer.width or layer.width < 1:
                    raise InputError(f"{self.name}: dense layers need a positive width")
                seen_dense = True
            elif layer.kind in (LayerKind.STEM, LayerKind.CONV, LayerKind.BLOCK, LayerKind.BOTTLENECK, LayerKind.POOL):
                if seen_dense:
                    raise InputError(f"{self.name}: spatial layers cannot follow dense layers")
            if layer.kind == LayerKind.STEM and (not layer.width or layer.width < 1):
                raise InputError(f"{self.name}: stem layers need a positive width")
            if layer.shortcut != ShortcutKind.NONE and layer.kind not in (LayerKind.BLOCK, LayerKind.BOTTLENECK):
                raise InputError(f"{self.name}: shortcuts are only valid on residual blocks")
            if layer.kind in (LayerKind.BLOCK, LayerKind.BOTTLENECK) and layer.shortcut == ShortcutKind.NONE:
                raise InputError(f"{self.name}: residual blocks need a shortcut kind")
            if layer.stride < 1 or layer.kernel < 1:
                raise InputError(f"{self.name}: kernel and stride must be >= 1")

    @property
    def conv_count(self) -> int:
        """N, the number of searchable convolutions."""
        return sum(layer.conv_count for layer in self.layers)

    @property
    def has_identity_shortcuts(self) -> bool:
        return any(layer.shortcut == ShortcutKind.IDENTITY for layer in self.layers)

    def slots(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        """For every slot, the convolution indices it drives and their ratios."""
        slots = []
        index = 0
        for layer in self.layers:
            if layer.kind == LayerKind.BOTTLENECK:
                slots.append(((index, index + 1, index + 2), BOTTLENECK_RATIOS))
            else:
                for offset in range(layer.conv_count):
                    slots.append(((index + offset,), (1,)))
            index += layer.conv_count
        return slots

    @property
    def slot_count(self) -> int:
        return len(self.slots())

    def expand(self, slot_widths: Sequence[int]) -> ChannelSchedule:
        """Expand one width per slot into a full per-convolution schedule."""
        slots = self.slots()
        if len(slot_widths) != len(slots):
            raise InputError(f"{self.name}: expected {len(slots)} slot widths, got {len(slot_widths)}")
        widths = [0] * self.conv_count
        for width, (indices, ratios) in zip(slot_widths, slots):
            for index, ratio in zip(indices, ratios):
                widths[index] = int(width) * ratio
        return ChannelSchedule(tuple(widths))

    def slot_widths(self, schedule: ChannelSchedule) -> tuple[int, ...]:
        return tuple(schedule.widths[indices[0]] for indices, _ in self.slots())

    def to_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            entry = {k: v for k, v in asdict(layer).items() if v is not None}
            entry["kind"] = str(layer.kind)
            entry["shortcut"] = str(layer.shortcut)
            entry["downsample"] = layer.downsample
            layers.append(entry)
        return {
            "name": self.name,
            "input_dims": list(self.input_dims),
            "classes": self.classes,
            "layers": layers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ArchitectureSpec:
        try:
            layers = []
            for entry in data["layers"]:
                entry = dict(entry)
                downsample = entry.pop("downsample", None)
                layer = LayerSpec(
                    kind=LayerKind(entry.pop("kind")),
                    shortcut=ShortcutKind(entry.pop("shortcut", ShortcutKind.NONE)),
                    **entry,
                )
                if downsample is not None and bool(downsample) != layer.downsample:
                    raise FormatError(f"layer {entry}: downsample flag disagrees with kind/stride")
                layers.append(layer)
            return cls(
                name=data.get("name", "custom"),
                layers=tuple(layers),
                input_dims=tuple(data.get("input_dims", (32, 32, 3))),
                classes=int(data.get("classes", 10)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed architecture spec: {exc}") from exc


@dataclass(frozen=True)
class ChannelSchedule:
    widths: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    def __len__(self) -> int:
        return len(self.widths)

    def __iter__(self) -> Iterator[int]:
        return iter(self.widths)

    @classmethod
    def uniform(cls, width: int, count: int) -> ChannelSchedule:
        return cls((width,) * count)

    @classmethod
    def load(cls, path: str | Path) -> ChannelSchedule:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise InputError(f"schedule file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"schedule file {path} is not valid JSON: {exc}") from exc
        if isinstance(data, dict):
            data = data.get("widths")
        if not isinstance(data, list) or not all(isinstance(w, int) for w in data):
            raise FormatError(f"schedule file {path} must hold a JSON array of integers")
        return cls(tuple(data))


def validate_schedule(spec: ArchitectureSpec, schedule: ChannelSchedule) -> None:
    if len(schedule) != spec.conv_count:
        raise InputError(f"{spec.name}: schedule has {len(schedule)} widths, architecture has {spec.conv_count} convolutions")
    for index, width in enumerate(schedule):
        if width < 2 or width % 2:
            raise InputError(f"{spec.name}: width {width} at layer {index + 1} must be even and >= 2")
    for indices, ratios in spec.slots():
        if len(indices) == 1:
            continue
        base = schedule.widths[indices[0]]
        for index, ratio in zip(indices, ratios):
            if schedule.widths[index] != base * ratio:
                raise InputError(
                    f"{spec.name}: bottleneck widths {[schedule.widths[i] for i in indices]} break the 1:1:4 ratio"
                )


@dataclass(frozen=True)
class Segmentation:
    boundaries: tuple[int, ...]
    count: int


def _boundaries_in(spec: ArchitectureSpec, per_layer) -> tuple[int, ...]:
    total = sum(per_layer(layer) for layer in spec.layers)
    seen = 0
    marks: list[int] = []
    for layer in spec.layers:
        if layer.downsample and 0 < seen < total:
            marks.append(seen)
        seen += per_layer(layer)
    return tuple(sorted(set(marks)))


def segment_boundaries(spec: ArchitectureSpec) -> Segmentation:
    """K_i: searchable convolutions before each downsampling step, and n.

    Downsampling with no searchable convolution on one side is not a boundary.
    """
    marks = _boundaries_in(spec, lambda layer: layer.conv_count)
    return Segmentation(marks, len(marks) + 1)


def slot_boundaries(spec: ArchitectureSpec) -> Segmentation:
    """Same as :func:`segment_boundaries` counted in width slots."""
    marks = _boundaries_in(spec, lambda layer: 1 if layer.kind == LayerKind.BOTTLENECK else layer.conv_count)
    return Segmentation(marks, len(marks) + 1)


def _needs_projection(layer: LayerSpec, c_in: int, c_out: int) -> bool:
    if layer.shortcut == ShortcutKind.PROJECTION:
        return True
    return layer.stride > 1 or c_in != c_out


def _walk(spec: ArchitectureSpec, schedule: ChannelSchedule):
    """Yield ``(label, kind, k, c_in, c_out, in_hw, out_hw)`` per weighted op."""
    validate_schedule(spec, schedule)
    h, w, c = spec.input_dims
    widths = iter(schedule.widths)
    conv_no = 0
    dense_no = 0
    for position, layer in enumerate(spec.layers, start=1):
        if layer.kind == LayerKind.STEM:
            oh, ow = (conv_output_size(s, layer.kernel, layer.stride, layer.kernel // 2) for s in (h, w))
            yield (f"stem{position}", "conv", layer.kernel, c, layer.width, (h, w), (oh, ow))
            h, w, c = oh, ow, layer.width
        elif layer.kind in (LayerKind.CONV, LayerKind.BLOCK, LayerKind.BOTTLENECK):
            block_in, in_hw = c, (h, w)
            for kernel, stride in layer.unit_shapes():
                conv_no += 1
                f = next(widths)
                oh, ow = (conv_output_size(s, kernel, stride, kernel // 2) for s in (h, w))
                yield (f"conv{conv_no}", "conv", kernel, c, f, (h, w), (oh, ow))
                h, w, c = oh, ow, f
            if layer.kind != LayerKind.CONV and _needs_projection(layer, block_in, c):
                yield (f"shortcut{conv_no}", "conv", 1, block_in, c, in_hw, (h, w))
        elif layer.kind == LayerKind.POOL:
            h, w = h // 2, w // 2
        elif layer.kind == LayerKind.DENSE:
            dense_no += 1
            yield (f"dense{dense_no}", "dense", 1, c, layer.width, (1, 1), (1, 1))
            c = layer.width
    yield ("classifier", "dense", 1, c, spec.classes, (1, 1), (1, 1))


def param_breakdown(spec: ArchitectureSpec, schedule: ChannelSchedule) -> dict[str, int]:
    """Trainable parameters per tensor group (conv weights, batch-norm, dense)."""
    counts: dict[str, int] = {}
    for label, kind, k, c_in, c_out, _, _ in _walk(spec, schedule):
        if kind == "conv":
            counts[f"{label}.weight"] = k * k * c_in * c_out
            counts[f"{label}.bn"] = 2 * c_out
        else:
            counts[f"{label}.weight"] = c_in * c_out
            counts[f"{label}.bias"] = c_out
    return counts


def param_count(spec: ArchitectureSpec, schedule: ChannelSchedule) -> int:
    return sum(param_breakdown(spec, schedule).values())


def flop_breakdown(spec: ArchitectureSpec, schedule: ChannelSchedule) -> dict[str, int]:
    """Multiply-accumulates per convolution and dense layer."""
    flops: dict[str, int] = {}
    for label, kind, k, c_in, c_out, _, (oh, ow) in _walk(spec, schedule):
        flops[label] = oh * ow * k * k * c_in * c_out if kind == "conv" else c_in * c_out
    return flops


def flop_count(spec: ArchitectureSpec, schedule: ChannelSchedule) -> int:
    return sum(flop_breakdown(spec, schedule).values())


def _he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def materialize(
    spec: ArchitectureSpec,
    schedule: ChannelSchedule,
    seed: int | np.random.Generator = 0,
    dtype=np.float32,
) -> NetworkInstance:
    """Build a He-normal initialised network whose searchable widths equal ``schedule``."""
    validate_schedule(spec, schedule)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    c = spec.input_dims[2]
    widths = iter(schedule.widths)
    layers: list[Layer] = []
    conv_no = 0
    gap_added = False

    def conv(name: str, k: int, c_in: int, c_out: int, stride: int, relu: bool, searchable: bool) -> ConvUnit:
        weight = _he_normal(rng, (k, k, c_in, c_out), k * k * c_in, dtype)
        return ConvUnit(name, weight, stride=stride, relu=relu, searchable=searchable)

    for position, layer in enumerate(spec.layers, start=1):
        if layer.kind == LayerKind.STEM:
            layers.append(conv(f"stem{position}", layer.kernel, c, layer.width, layer.stride, True, False))
            c = layer.width
        elif layer.kind == LayerKind.CONV:
            conv_no += 1
            f = next(widths)
            layers.append(conv(f"conv{conv_no}", layer.kernel, c, f, layer.stride, True, True))
            c = f
        elif layer.kind in (LayerKind.BLOCK, LayerKind.BOTTLENECK):
            block_in = c
            units = []
            shapes = layer.unit_shapes()
            for offset, (kernel, stride) in enumerate(shapes):
                conv_no += 1
                f = next(widths)
                last = offset == len(shapes) - 1
                units.append(conv(f"conv{conv_no}", kernel, c, f, stride, not last, True))
                c = f
            shortcut = None
            if _needs_projection(layer, block_in, c):
                shortcut = conv(f"shortcut{conv_no}", 1, block_in, c, layer.stride, False, False)
            layers.append(Residual(f"block{position}", units, shortcut))
        elif layer.kind == LayerKind.POOL:
            layers.append(Pool(f"pool{position}", layer.pool))
        elif layer.kind == LayerKind.DROPOUT:
            layers.append(Dropout(f"dropout{position}", layer.rate))
        elif layer.kind == LayerKind.DENSE:
            if not gap_added:
                layers.append(GlobalAvgPool())
                gap_added = True
            dense_no = sum(isinstance(item, Dense) for item in layers) + 1
            layers.append(Dense(f"dense{dense_no}", _he_normal(rng, (c, layer.width), c, dtype), relu=True))
            c = layer.width
    if not gap_added:
        layers.append(GlobalAvgPool())
    layers.append(Dense("classifier", _he_normal(rng, (c, spec.classes), c, dtype)))
    return NetworkInstance(spec, schedule, layers, dtype=dtype)


def build_initial_model(
    spec: ArchitectureSpec,
    base_width: int | None = None,
    seed: int | np.random.Generator = 0,
    dtype=np.float32,
) -> NetworkInstance:
    """Uniform-width starting network; ``base_width`` defaults to ``default_base_width``."""
    if base_width is None:
        base_width = default_base_width(spec)
    if base_width < 2 or base_width % 2:
        raise InputError(f"base width must be even and >= 2, got {base_width}")
    schedule = spec.expand([base_width] * spec.slot_count)
    return materialize(spec, schedule, seed, dtype)


def default_base_width(spec: ArchitectureSpec, reference: ChannelSchedule | None = None) -> int:
    """Half of the narrowest reference width, rounded down to an even number.

    Without a reference schedule the narrowest stem width stands in; 32 if
    there is none.
    """
    if reference is not None:
        narrowest = min(spec.slot_widths(reference))
    else:
        stems = [layer.width for layer in spec.layers if layer.kind == LayerKind.STEM]
        narrowest = min(stems) if stems else 64
    return max(2, (narrowest // 2) // 2 * 2)
