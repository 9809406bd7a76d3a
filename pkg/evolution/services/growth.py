"""Width-growth functions, genotypes and integer realisation.

Each growth function maps a slot position x in (0, N] to a fractional width
increment in [0, λ]. A genotype records which functions were applied; its
multipliers are recomputed from the history so that the realised schedule
never depends on the order mutations happened in.
"""

from __future__ import annotations

import json
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
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

from ..exceptions import FormatError, InputError
from .architecture import ArchitectureSpec, ChannelSchedule, slot_boundaries


class GrowthFunctionId(StrEnum):
    A = "A"  # increasing slope
    B = "B"  # A mirrored about x = N/2
    C = "C"  # constant slope
    D = "D"  # C mirrored about x = N/2
    E = "E"  # decreasing slope, B reflected about λ/2
    F = "F"  # E mirrored about x = N/2
    G = "G"  # rising step, one level per downsampling segment
    H = "H"  # falling step
    CONST = "CONST"


ALL_FUNCTIONS: tuple[GrowthFunctionId, ...] = tuple(GrowthFunctionId)


class AccountingMode(StrEnum):
    COMPOUND = "compound"
    FIXED_BASE = "fixed_base"


@dataclass(frozen=True)
class GrowthContext:
    N: int
    lam: float
    boundaries: tuple[int, ...] = ()

    def __post_init__(self):
        if self.N < 1:
            raise InputError(f"N must be >= 1, got {self.N}")
        if not self.lam > 0:
            raise InputError(f"lambda must be > 0, got {self.lam}")
        previous = 0
        for k in self.boundaries:
            if not previous < k <= self.N:
                raise InputError(f"boundaries must be strictly increasing in (0, {self.N}]: {self.boundaries}")
            previous = k

    @property
    def segments(self) -> int:
        """n, the number of segments the boundaries cut (0, N] into."""
        return len(self.boundaries) + 1

    @classmethod
    def for_spec(cls, spec: ArchitectureSpec, lam: float) -> GrowthContext:
        seg = slot_boundaries(spec)
        return cls(spec.slot_count, lam, seg.boundaries)

    def segment_of(self, x: float) -> int:
        """1-based index of the segment holding x."""
        for index, k in enumerate(self.boundaries, start=1):
            if x <= k:
                return index
        return self.segments


def _slope_up(x: float, ctx: GrowthContext) -> float:
    r = 1.0 + ctx.lam
    return ctx.lam * ((r**x - 1.0) / (r**ctx.N - 1.0))


def _slope_down(x: float, ctx: GrowthContext) -> float:
    r = 1.0 + ctx.lam
    top = r**ctx.N
    return ctx.lam * ((top - r ** (ctx.N - x)) / (top - 1.0))


def _growth(tag: GrowthFunctionId, x: float, ctx: GrowthContext) -> float:
    lam, n_layers = ctx.lam, ctx.N
    match tag:
        case GrowthFunctionId.A:
            return _slope_up(x, ctx)
        case GrowthFunctionId.B:
            return _slope_up(n_layers - x, ctx)
        case GrowthFunctionId.C:
            return lam * (x / n_layers)
        case GrowthFunctionId.D:
            return lam - lam * (x / n_layers)
        case GrowthFunctionId.E:
            return _slope_down(x, ctx)
        case GrowthFunctionId.F:
            return _slope_down(n_layers - x, ctx)
        case GrowthFunctionId.G:
            return lam / 2 ** (ctx.segments - ctx.segment_of(x))
        case GrowthFunctionId.H:
            return lam / 2 ** (ctx.segment_of(x) - 1)
        case GrowthFunctionId.CONST:
            return lam / 2
    raise InputError(f"unknown growth function {tag!r}")


def eval_growth(tag: GrowthFunctionId | str, x: float, ctx: GrowthContext) -> float:
    """Fractional width increment of growth function ``tag`` at slot position ``x``."""
    if not 0 < x <= ctx.N:
        raise InputError(f"x must lie in (0, {ctx.N}], got {x}")
    return _growth(GrowthFunctionId(tag), x, ctx)


def increments(tag: GrowthFunctionId | str, ctx: GrowthContext) -> list[float]:
    """``eval_growth`` at every slot position 1..N."""
    return [eval_growth(tag, x, ctx) for x in range(1, ctx.N + 1)]


@dataclass(frozen=True)
class Genotype:
    base_widths: tuple[float, ...]
    multipliers: tuple[float, ...]
    history: tuple[GrowthFunctionId, ...] = ()
    mode: AccountingMode = AccountingMode.COMPOUND
    lam: float = 0.2

    def __post_init__(self):
        if len(self.base_widths) != len(self.multipliers):
            raise InputError("base widths and multipliers must have the same length")
        if any(m < 1 for m in self.multipliers):
            raise InputError("multipliers must be >= 1")

    @classmethod
    def initial(
        cls,
        base_widths: Sequence[float],
        mode: AccountingMode = AccountingMode.COMPOUND,
        lam: float = 0.2,
    ) -> Genotype:
        widths = tuple(float(w) for w in base_widths)
        return cls(widths, (1.0,) * len(widths), (), AccountingMode(mode), lam)

    @property
    def size(self) -> int:
        return len(self.base_widths)

    def real_widths(self) -> tuple[float, ...]:
        return tuple(b * m for b, m in zip(self.base_widths, self.multipliers))

    def to_dict(self) -> dict:
        return {
            "base_widths": list(self.base_widths),
            "multipliers": list(self.multipliers),
            "history": [str(tag) for tag in self.history],
            "mode": str(self.mode),
            "lam": self.lam,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Genotype:
        try:
            return cls(
                base_widths=tuple(float(w) for w in data["base_widths"]),
                multipliers=tuple(float(m) for m in data.get("multipliers", [1.0] * len(data["base_widths"]))),
                history=tuple(GrowthFunctionId(tag) for tag in data.get("history", [])),
                mode=AccountingMode(data.get("mode", AccountingMode.COMPOUND)),
                lam=float(data.get("lam", data.get("lambda", 0.2))),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed genotype: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def load(cls, path: str | Path) -> Genotype:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except FileNotFoundError as exc:
            raise InputError(f"genotype file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"genotype file {path} is not valid JSON: {exc}") from exc


def accumulate(
    history: Iterable[GrowthFunctionId],
    ctx: GrowthContext,
    mode: AccountingMode = AccountingMode.COMPOUND,
) -> tuple[float, ...]:
    """Multipliers produced by ``history``, independent of its order.

    COMPOUND multiplies (1 + f(i)) once per application; FIXED_BASE adds f(i)
    to 1, i.e. every increment is measured against the initial widths.
    """
    counts = Counter(GrowthFunctionId(tag) for tag in history)
    multipliers = [1.0] * ctx.N
    for tag in ALL_FUNCTIONS:
        times = counts.get(tag, 0)
        if not times:
            continue
        for index, f in enumerate(increments(tag, ctx)):
            if mode == AccountingMode.COMPOUND:
                multipliers[index] *= (1.0 + f) ** times
            else:
                multipliers[index] += times * f
    return tuple(multipliers)


def apply_increment(g: Genotype, tag: GrowthFunctionId | str, ctx: GrowthContext) -> Genotype:
    """Append ``tag`` to the history and recompute the multipliers."""
    if g.size != ctx.N:
        raise InputError(f"genotype has {g.size} widths, context expects {ctx.N}")
    history = g.history + (GrowthFunctionId(tag),)
    return replace(g, history=history, multipliers=accumulate(history, ctx, g.mode), lam=ctx.lam)


def round_width(w: float) -> int:
    """Nearest integer (ties to even), bumped up by one when odd; at least 2."""
    if w < 1:
        raise InputError(f"width must be >= 1, got {w}")
    nearest = round(w)
    if nearest % 2:
        nearest += 1
    return max(2, nearest)


def realize_slots(g: Genotype) -> tuple[int, ...]:
    return tuple(round_width(w) for w in g.real_widths())


def realize_schedule(g: Genotype, spec: ArchitectureSpec | None = None) -> ChannelSchedule:
    """Integer schedule of ``g``; bottleneck specs are expanded slot by slot."""
    slots = realize_slots(g)
    if spec is None:
        return ChannelSchedule(slots)
    return spec.expand(slots)


@dataclass(frozen=True)
class MutationPool:
    """The growth functions a mutation may draw from, uniformly."""

    functions: tuple[GrowthFunctionId, ...] = field(default=ALL_FUNCTIONS)

    def __post_init__(self):
        if not self.functions:
            raise InputError("the mutation pool cannot be empty")
        object.__setattr__(self, "functions", tuple(GrowthFunctionId(f) for f in self.functions))

    def draw(self, rng) -> GrowthFunctionId:
        return self.functions[int(rng.integers(len(self.functions)))]
