"""Dense NHWC tensor kernels and the layer objects networks are built from.

Activations are ``(batch, height, width, channels)``; convolution weights are
``(k1, k2, in_channels, out_channels)``. Every layer caches what its backward
pass needs during ``forward(..., training=True)``.
"""

from __future__ import annotations

import copy
from collections.abc import Iterator, Sequence

import numpy as np

from ..exceptions import InputError, NumericError, ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _check_finite(array: np.ndarray, what: str) -> None:
    if not np.isfinite(array).all():
        raise NumericError(f"{what} contains non-finite values")


def _accumulator(dtype: np.dtype) -> np.dtype:
    # float32 runs accumulate offsets in float64 and round once at the end.
    return np.float64 if dtype == np.float32 else dtype


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv2d_forward(
    x: np.ndarray, weights: np.ndarray, stride: int = 1, padding: int = 0
) -> np.ndarray:
    """Cross-correlate an NHWC batch with HWIO weights."""
    if x.ndim != 4 or weights.ndim != 4:
        raise ShapeError("conv2d expects 4-d input and weights")
    if stride < 1:
        raise InputError(f"stride must be >= 1, got {stride}")
    n, h, w, c = x.shape
    k1, k2, c_in, f = weights.shape
    if c_in != c:
        raise ShapeError(f"weights expect {c_in} input channels, input has {c}")
    oh = conv_output_size(h, k1, stride, padding)
    ow = conv_output_size(w, k2, stride, padding)
    if oh < 1 or ow < 1:
        raise ShapeError(f"kernel {k1}x{k2} does not fit a {h}x{w} input")
    _check_finite(x, "conv2d input")
    _check_finite(weights, "conv2d weights")

    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    out = np.zeros((n, oh, ow, f), dtype=_accumulator(x.dtype))
    for i in range(k1):
        for j in range(k2):
            patch = xp[:, i : i + stride * (oh - 1) + 1 : stride, j : j + stride * (ow - 1) + 1 : stride, :]
            out += patch @ weights[i, j]
    return out.astype(x.dtype, copy=False)


def conv2d_backward(
    dout: np.ndarray,
    x: np.ndarray,
    weights: np.ndarray,
    stride: int = 1,
    padding: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(dx, dweights)`` for :func:`conv2d_forward`."""
    n, h, w, c = x.shape
    k1, k2, _, _ = weights.shape
    _, oh, ow, _ = dout.shape
    acc = _accumulator(x.dtype)

    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    dxp = np.zeros(xp.shape, dtype=acc)
    dw = np.zeros(weights.shape, dtype=acc)
    for i in range(k1):
        for j in range(k2):
            rows = slice(i, i + stride * (oh - 1) + 1, stride)
            cols = slice(j, j + stride * (ow - 1) + 1, stride)
            patch = xp[:, rows, cols, :]
            dw[i, j] = np.tensordot(patch, dout, axes=([0, 1, 2], [0, 1, 2]))
            dxp[:, rows, cols, :] += dout @ weights[i, j].T
    dx = dxp[:, padding : padding + h, padding : padding + w, :]
    return dx.astype(x.dtype), dw.astype(weights.dtype)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to ``logits``."""
    n, classes = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise InputError(f"labels must lie in [0, {classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = float(-log_probs[np.arange(n), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


class Layer:
    """A differentiable step of a network.

    Parameters and buffers are exposed as name -> array dictionaries holding
    live references; ``grads`` is filled by ``backward``.
    """

    name: str = ""

    def __init__(self, name: str):
        self.name = name
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, training: bool, rng: np.random.Generator | None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def set_array(self, key: str, value: np.ndarray) -> None:
        raise KeyError(key)


class ConvUnit(Layer):
    """Bias-free convolution, batch normalisation, optional ReLU."""

    def __init__(
        self,
        name: str,
        weight: np.ndarray,
        stride: int = 1,
        relu: bool = True,
        searchable: bool = True,
    ):
        super().__init__(name)
        k = weight.shape[0]
        f = weight.shape[3]
        self.weight = weight
        self.stride = stride
        self.padding = k // 2
        self.relu = relu
        self.searchable = searchable
        self.gamma = np.ones(f, dtype=weight.dtype)
        self.beta = np.zeros(f, dtype=weight.dtype)
        self.running_mean = np.zeros(f, dtype=weight.dtype)
        self.running_var = np.ones(f, dtype=weight.dtype)
        self._cache: tuple | None = None

    @property
    def width(self) -> int:
        return self.weight.shape[3]

    def forward(self, x, training, rng):
        z = conv2d_forward(x, self.weight, self.stride, self.padding)
        if training:
            axes = (0, 1, 2)
            mean = z.mean(axis=axes)
            var = z.var(axis=axes)
            count = z.shape[0] * z.shape[1] * z.shape[2]
            unbiased = var * count / max(count - 1, 1)
            self.running_mean[...] = (1 - BN_MOMENTUM) * self.running_mean + BN_MOMENTUM * mean
            self.running_var[...] = (1 - BN_MOMENTUM) * self.running_var + BN_MOMENTUM * unbiased
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        x_hat = (z - mean) * inv_std
        y = self.gamma * x_hat + self.beta
        if self.relu:
            y = np.maximum(y, 0)
        if training:
            self._cache = (x, x_hat, inv_std, y)
        return y.astype(x.dtype, copy=False)

    def backward(self, dout):
        if self._cache is None:
            raise InputError(f"{self.name}: backward called before a training forward pass")
        x, x_hat, inv_std, y = self._cache
        if self.relu:
            dout = dout * (y > 0)
        axes = (0, 1, 2)
        count = x_hat.shape[0] * x_hat.shape[1] * x_hat.shape[2]
        self.grads["bn.gamma"] = (dout * x_hat).sum(axis=axes)
        self.grads["bn.beta"] = dout.sum(axis=axes)
        dx_hat = dout * self.gamma
        dz = (inv_std / count) * (
            count * dx_hat - dx_hat.sum(axis=axes) - x_hat * (dx_hat * x_hat).sum(axis=axes)
        )
        dx, dw = conv2d_backward(dz.astype(x.dtype), x, self.weight, self.stride, self.padding)
        self.grads["weight"] = dw
        return dx

    def parameters(self):
        return {"weight": self.weight, "bn.gamma": self.gamma, "bn.beta": self.beta}

    def buffers(self):
        return {"bn.running_mean": self.running_mean, "bn.running_var": self.running_var}

    def set_array(self, key, value):
        attr = {
            "weight": "weight",
            "bn.gamma": "gamma",
            "bn.beta": "beta",
            "bn.running_mean": "running_mean",
            "bn.running_var": "running_var",
        }[key]
        setattr(self, attr, value)


class Residual(Layer):
    """``relu(branch(x) + shortcut(x))``; ``shortcut=None`` is the identity."""

    def __init__(self, name: str, units: list[ConvUnit], shortcut: ConvUnit | None):
        super().__init__(name)
        self.units = units
        self.shortcut = shortcut
        self._mask: np.ndarray | None = None

    def children(self) -> list[ConvUnit]:
        return self.units + ([self.shortcut] if self.shortcut is not None else [])

    def forward(self, x, training, rng):
        out = x
        for unit in self.units:
            out = unit.forward(out, training, rng)
        skip = self.shortcut.forward(x, training, rng) if self.shortcut is not None else x
        if skip.shape != out.shape:
            raise ShapeError(f"{self.name}: shortcut shape {skip.shape} != branch shape {out.shape}")
        y = np.maximum(out + skip, 0)
        if training:
            self._mask = y > 0
        return y

    def backward(self, dout):
        dout = dout * self._mask
        d_branch = dout
        for unit in reversed(self.units):
            d_branch = unit.backward(d_branch)
        d_skip = self.shortcut.backward(dout) if self.shortcut is not None else dout
        return d_branch + d_skip


class Pool(Layer):
    """2x2 stride-2 max or average pooling; odd trailing rows/columns are dropped."""

    def __init__(self, name: str, kind: str = "max"):
        super().__init__(name)
        if kind not in ("max", "avg"):
            raise InputError(f"unknown pool kind {kind!r}")
        self.kind = kind
        self._cache: tuple | None = None

    def forward(self, x, training, rng):
        n, h, w, c = x.shape
        oh, ow = h // 2, w // 2
        if oh < 1 or ow < 1:
            raise ShapeError(f"{self.name}: cannot pool a {h}x{w} map")
        windows = (
            x[:, : 2 * oh, : 2 * ow, :]
            .reshape(n, oh, 2, ow, 2, c)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, oh, ow, c, 4)
        )
        if self.kind == "max":
            idx = windows.argmax(axis=-1)
            y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
        else:
            idx = None
            y = windows.mean(axis=-1)
        if training:
            self._cache = (x.shape, idx)
        return y

    def backward(self, dout):
        shape, idx = self._cache
        n, h, w, c = shape
        oh, ow = dout.shape[1], dout.shape[2]
        if self.kind == "max":
            windows = np.zeros((n, oh, ow, c, 4), dtype=dout.dtype)
            np.put_along_axis(windows, idx[..., None], dout[..., None], axis=-1)
        else:
            windows = np.repeat(dout[..., None] / 4.0, 4, axis=-1)
        block = windows.reshape(n, oh, ow, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * oh, 2 * ow, c)
        dx = np.zeros(shape, dtype=dout.dtype)
        dx[:, : 2 * oh, : 2 * ow, :] = block
        return dx


class Dropout(Layer):
    """Inverted dropout with a fixed rate; identity outside training."""

    def __init__(self, name: str, rate: float):
        super().__init__(name)
        if not 0 <= rate < 1:
            raise InputError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self._mask: np.ndarray | None = None

    def forward(self, x, training, rng):
        if not training or self.rate == 0:
            self._mask = None
            return x
        if rng is None:
            raise InputError(f"{self.name}: training with dropout needs a random stream")
        self._mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / (1 - self.rate)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class GlobalAvgPool(Layer):
    def __init__(self, name: str = "gap"):
        super().__init__(name)
        self._shape: tuple | None = None

    def forward(self, x, training, rng):
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dout):
        n, h, w, c = self._shape
        return np.broadcast_to(dout[:, None, None, :] / (h * w), self._shape).copy()


class Dense(Layer):
    def __init__(self, name: str, weight: np.ndarray, relu: bool = False):
        super().__init__(name)
        self.weight = weight
        self.bias = np.zeros(weight.shape[1], dtype=weight.dtype)
        self.relu = relu
        self._cache: tuple | None = None

    @property
    def width(self) -> int:
        return self.weight.shape[1]

    def forward(self, x, training, rng):
        if x.shape[1] != self.weight.shape[0]:
            raise ShapeError(f"{self.name}: expects {self.weight.shape[0]} features, got {x.shape[1]}")
        y = x @ self.weight + self.bias
        if self.relu:
            y = np.maximum(y, 0)
        if training:
            self._cache = (x, y)
        return y

    def backward(self, dout):
        x, y = self._cache
        if self.relu:
            dout = dout * (y > 0)
        self.grads["weight"] = x.T @ dout
        self.grads["bias"] = dout.sum(axis=0)
        return dout @ self.weight.T

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def set_array(self, key, value):
        setattr(self, {"weight": "weight", "bias": "bias"}[key], value)


def _leaves(layer: Layer) -> Iterator[Layer]:
    if isinstance(layer, Residual):
        for child in layer.children():
            yield child
    else:
        yield layer


class NetworkInstance:
    """Materialised weights for one architecture at one integer width schedule.

    ``layers`` run in order; the last two are always global average pooling
    (or a preceding dense stack) and the ``classifier`` dense layer. Instances
    own their arrays; use :meth:`copy` before mutating a shared one.
    """

    def __init__(self, spec, schedule, layers: list[Layer], dtype=np.float32):
        self.spec = spec
        self.schedule = schedule
        self.layers = layers
        self.dtype = np.dtype(dtype)

    def leaves(self) -> Iterator[Layer]:
        for layer in self.layers:
            yield from _leaves(layer)

    def conv_units(self) -> list[ConvUnit]:
        """Searchable convolutions in declaration order."""
        return [
            leaf
            for leaf in self.leaves()
            if isinstance(leaf, ConvUnit) and leaf.searchable
        ]

    def widths(self) -> tuple[int, ...]:
        return tuple(unit.width for unit in self.conv_units())

    def parameters(self) -> dict[str, np.ndarray]:
        params: dict[str, np.ndarray] = {}
        for leaf in self.leaves():
            for key, value in leaf.parameters().items():
                params[f"{leaf.name}.{key}"] = value
        return params

    def buffers(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for leaf in self.leaves():
            for key, value in leaf.buffers().items():
                out[f"{leaf.name}.{key}"] = value
        return out

    def state(self) -> dict[str, np.ndarray]:
        """Parameters followed by buffers, in declaration order."""
        arrays: dict[str, np.ndarray] = {}
        for leaf in self.leaves():
            for key, value in {**leaf.parameters(), **leaf.buffers()}.items():
                arrays[f"{leaf.name}.{key}"] = value
        return arrays

    def gradients(self) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        for leaf in self.leaves():
            for key, value in leaf.grads.items():
                grads[f"{leaf.name}.{key}"] = value
        return grads

    def leaf(self, name: str) -> Layer:
        for leaf in self.leaves():
            if leaf.name == name:
                return leaf
        raise KeyError(name)

    def param_count(self) -> int:
        return int(sum(array.size for array in self.parameters().values()))

    def copy(self) -> NetworkInstance:
        return copy.deepcopy(self)

    def astype(self, dtype) -> NetworkInstance:
        clone = self.copy()
        clone.dtype = np.dtype(dtype)
        for leaf in clone.leaves():
            for key, value in {**leaf.parameters(), **leaf.buffers()}.items():
                leaf.set_array(key, value.astype(dtype))
        return clone

    def forward(
        self,
        batch: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Return logits for ``batch``."""
        expected = tuple(self.spec.input_dims)
        if batch.ndim != 4 or batch.shape[1:] != expected:
            raise ShapeError(f"batch dims {batch.shape[1:]} do not match architecture input {expected}")
        _check_finite(batch, "network input")
        x = batch.astype(self.dtype, copy=False)
        for layer in self.layers:
            x = layer.forward(x, training, rng)
        return x

    def backward(self, dlogits: np.ndarray) -> None:
        d = dlogits.astype(self.dtype, copy=False)
        for layer in reversed(self.layers):
            d = layer.backward(d)


def network_forward(net: NetworkInstance, batch: np.ndarray) -> np.ndarray:
    """Class probabilities in evaluation mode (running batch-norm statistics)."""
    return softmax(net.forward(batch, training=False))


def network_backward(
    net: NetworkInstance,
    batch: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    rng: np.random.Generator | None = None,
) -> tuple[dict[str, np.ndarray], float]:
    """Training-mode forward and backward pass; returns ``(gradients, loss)``."""
    labels = np.asarray(labels, dtype=np.int64)
    if batch.shape[0] == 0:
        raise InputError("cannot backpropagate an empty batch")
    classes = net.spec.classes
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise InputError(f"labels must lie in [0, {classes})")
    logits = net.forward(batch, training=True, rng=rng)
    loss, dlogits = softmax_cross_entropy(logits.astype(np.float64), labels)
    net.backward(dlogits)
    return net.gradients(), loss
