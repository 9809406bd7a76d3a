"""Function-preserving widening of trained networks.

Widening output channel set f to f' replicates randomly chosen filters and
divides the matching input slices of every consumer by the replication count,
so a noise-free widening computes exactly the same function. Mappings here are
0-based: ``g[j] == j`` for ``j < f``.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from ..exceptions import InputError, ShapeError
from .architecture import ChannelSchedule, validate_schedule
from .growth import GrowthContext, GrowthFunctionId, Genotype, apply_increment, realize_schedule
from .tensor import ConvUnit, Dense, NetworkInstance, Residual

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WidenMapping:
    g: tuple[int, ...]
    f: int

    @property
    def f_prime(self) -> int:
        return len(self.g)

    @property
    def replication_counts(self) -> tuple[int, ...]:
        counts = np.bincount(np.asarray(self.g), minlength=self.f)
        return tuple(int(c) for c in counts)

    @property
    def is_identity(self) -> bool:
        return self.f_prime == self.f

    def divisors(self) -> np.ndarray:
        """|{x : g(x) = g(j)}| for every new index j."""
        return np.asarray(self.replication_counts)[np.asarray(self.g)]


@dataclass(frozen=True)
class NoiseSpec:
    delta_max: float = 0.05
    enabled: bool = True
    per_filter: bool = False

    def __post_init__(self):
        if not 0 <= self.delta_max <= 1:
            raise InputError(f"delta_max must lie in [0, 1], got {self.delta_max}")

    @classmethod
    def off(cls) -> NoiseSpec:
        return cls(delta_max=0.0, enabled=False)

    @property
    def active(self) -> bool:
        return self.enabled and self.delta_max > 0


def make_mapping(f: int, f_prime: int, rng: np.random.Generator) -> WidenMapping:
    if f < 1:
        raise InputError(f"f must be >= 1, got {f}")
    if f_prime < f:
        raise InputError(f"cannot narrow {f} filters to {f_prime}")
    extra = rng.integers(0, f, size=f_prime - f)
    return WidenMapping(tuple(range(f)) + tuple(int(s) for s in extra), f)


def replicate_out(array: np.ndarray, mapping: WidenMapping) -> np.ndarray:
    """Copy source filters along the last axis."""
    if array.shape[-1] != mapping.f:
        raise ShapeError(f"expected {mapping.f} output channels, got {array.shape[-1]}")
    return np.take(array, mapping.g, axis=-1)


def divide_in(
    array: np.ndarray,
    mapping: WidenMapping,
    noise: NoiseSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    """Expand the input axis (second to last) and divide by replication count.

    With active noise every entry is scaled by (1 + δ), δ ~ U[0, delta_max],
    drawn per entry or, with ``per_filter``, once per input channel.
    """
    if array.shape[-2] != mapping.f:
        raise ShapeError(f"successor expects {array.shape[-2]} input channels, mapping has {mapping.f}")
    expanded = np.take(array, mapping.g, axis=-2)
    shape = [1] * array.ndim
    shape[-2] = mapping.f_prime
    divisors = mapping.divisors().reshape(shape).astype(array.dtype)
    result = expanded / divisors
    if noise.active:
        if noise.per_filter:
            delta = rng.uniform(0.0, noise.delta_max, size=shape)
        else:
            delta = rng.uniform(0.0, noise.delta_max, size=result.shape)
        result = result * (1.0 + delta).astype(array.dtype)
    return result.astype(array.dtype, copy=False)


def widen_layer(
    W_i: np.ndarray,
    W_next: np.ndarray,
    mapping: WidenMapping,
    noise: NoiseSpec,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Widen one layer and its successor; returns ``(U_i, U_next)``."""
    if W_i.shape[-1] != W_next.shape[-2]:
        raise InputError(f"layer has {W_i.shape[-1]} filters but successor expects {W_next.shape[-2]}")
    if mapping.is_identity:
        return W_i.copy(), W_next.copy()
    return replicate_out(W_i, mapping), divide_in(W_next, mapping, noise, rng)


def _widen_unit_out(unit: ConvUnit, mapping: WidenMapping) -> None:
    unit.weight = replicate_out(unit.weight, mapping)
    unit.gamma = replicate_out(unit.gamma, mapping)
    unit.beta = replicate_out(unit.beta, mapping)
    unit.running_mean = replicate_out(unit.running_mean, mapping)
    unit.running_var = replicate_out(unit.running_var, mapping)


def _feed(layer, stream: WidenMapping | None, noise: NoiseSpec, rng: np.random.Generator) -> None:
    if stream is not None:
        layer.weight = divide_in(layer.weight, stream, noise, rng)


def widen_network(
    net: NetworkInstance,
    target: ChannelSchedule,
    noise: NoiseSpec,
    rng: np.random.Generator,
) -> NetworkInstance:
    """Return a widened copy of ``net`` whose searchable widths equal ``target``."""
    spec = net.spec
    if spec.has_identity_shortcuts:
        raise InputError(f"{spec.name}: widening is not supported with identity shortcuts")
    validate_schedule(spec, target)
    current = net.widths()
    if any(t < c for t, c in zip(target.widths, current)):
        raise InputError(f"narrowing requested: {current} -> {target.widths}")

    clone = net.copy()
    widths = iter(target.widths)

    def widen_unit(unit: ConvUnit, stream: WidenMapping | None) -> WidenMapping | None:
        _feed(unit, stream, noise, rng)
        if not unit.searchable:
            return None
        mapping = make_mapping(unit.width, next(widths), rng)
        if mapping.is_identity:
            return None
        _widen_unit_out(unit, mapping)
        return mapping

    stream: WidenMapping | None = None
    for layer in clone.layers:
        if isinstance(layer, ConvUnit):
            stream = widen_unit(layer, stream)
        elif isinstance(layer, Residual):
            block_in = stream
            inner = stream
            for unit in layer.units:
                inner = widen_unit(unit, inner)
            if layer.shortcut is not None:
                _feed(layer.shortcut, block_in, noise, rng)
                if inner is not None:
                    _widen_unit_out(layer.shortcut, inner)
            stream = inner
        elif isinstance(layer, Dense):
            _feed(layer, stream, noise, rng)
            stream = None

    clone.schedule = target
    logger.debug("Widened %s: %s -> %s", spec.name, current, target.widths)
    return clone


def randomize_batchnorm(net: NetworkInstance, rng: np.random.Generator) -> None:
    """Give every batch-norm non-trivial affine parameters and running statistics."""
    for leaf in net.leaves():
        if isinstance(leaf, ConvUnit):
            f = leaf.width
            leaf.gamma = rng.uniform(0.5, 1.5, f).astype(net.dtype)
            leaf.beta = rng.uniform(-0.5, 0.5, f).astype(net.dtype)
            leaf.running_mean = rng.uniform(-0.5, 0.5, f).astype(net.dtype)
            leaf.running_var = rng.uniform(0.5, 2.0, f).astype(net.dtype)


def max_logit_deviation(a: NetworkInstance, b: NetworkInstance, inputs: np.ndarray) -> float:
    """Largest absolute logit difference in evaluation mode."""
    return float(np.max(np.abs(a.forward(inputs).astype(np.float64) - b.forward(inputs).astype(np.float64))))


def preservation_report(
    net: NetworkInstance,
    genotype: Genotype,
    ctx: GrowthContext,
    trials: int,
    noise: NoiseSpec,
    rng: np.random.Generator,
    tags: Iterable[GrowthFunctionId],
    batch_size: int = 4,
) -> dict[str, float]:
    """Max logit deviation per growth function over ``trials`` random input batches."""
    report: dict[str, float] = {}
    if trials <= 0:
        return report
    for tag in tags:
        child = realize_schedule(apply_increment(genotype, tag, ctx), net.spec)
        worst = 0.0
        for _ in range(trials):
            widened = widen_network(net, child, noise, rng)
            inputs = rng.standard_normal((batch_size, *net.spec.input_dims)).astype(net.dtype)
            worst = max(worst, max_logit_deviation(net, widened, inputs))
        report[str(tag)] = worst
        logger.info("Preservation %s: max deviation %.3e", tag, worst)
    return report
