import numpy as np
import pytest

from evolution.exceptions import InputError, NumericError, ShapeError
from evolution.services.architecture import materialize
from evolution.services.tensor import (
    Pool,
    conv2d_backward,
    conv2d_forward,
    network_backward,
    network_forward,
    softmax_cross_entropy,
)


def direct_conv(x, w, stride, padding):
    """Loop-by-loop cross-correlation used as the oracle."""
    n, h, wd, c = x.shape
    k1, k2, _, f = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    oh = (h + 2 * padding - k1) // stride + 1
    ow = (wd + 2 * padding - k2) // stride + 1
    out = np.zeros((n, oh, ow, f))
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                window = xp[b, i * stride : i * stride + k1, j * stride : j * stride + k2, :]
                out[b, i, j] = np.tensordot(window, w, axes=([0, 1, 2], [0, 1, 2]))
    return out


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-30)


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv_matches_direct_loop(rng, stride, padding):
    x = rng.standard_normal((2, 7, 6, 3))
    w = rng.standard_normal((3, 3, 3, 5))
    np.testing.assert_allclose(conv2d_forward(x, w, stride, padding), direct_conv(x, w, stride, padding), atol=1e-12)


def test_float32_conv_matches_direct_loop_on_random_cases():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        k = int(rng.integers(1, 4))
        stride = int(rng.integers(1, 4))
        padding = int(rng.integers(0, 3))
        h, w = (int(v) for v in rng.integers(max(k - 2 * padding, 1), 8, size=2))
        x = rng.uniform(-1, 1, (int(rng.integers(1, 3)), h, w, int(rng.integers(1, 4)))).astype(np.float32)
        weights = rng.uniform(-1, 1, (k, k, x.shape[3], int(rng.integers(1, 5)))).astype(np.float32)
        out = conv2d_forward(x, weights, stride, padding)
        assert out.dtype == np.float32
        expected = direct_conv(x.astype(np.float64), weights.astype(np.float64), stride, padding)
        np.testing.assert_allclose(out, expected, rtol=1e-6, atol=1e-6)


def test_conv_identity_kernel_returns_input(rng):
    x = rng.standard_normal((1, 4, 4, 1))
    w = np.zeros((3, 3, 1, 1))
    w[1, 1, 0, 0] = 1.0
    np.testing.assert_array_equal(conv2d_forward(x, w, 1, 1), x)


def test_conv_rejects_channel_mismatch(rng):
    with pytest.raises(ShapeError):
        conv2d_forward(rng.standard_normal((1, 4, 4, 2)), rng.standard_normal((3, 3, 3, 1)), 1, 1)


def test_conv_rejects_non_finite_input(rng):
    x = rng.standard_normal((1, 4, 4, 1))
    x[0, 0, 0, 0] = np.nan
    with pytest.raises(NumericError):
        conv2d_forward(x, rng.standard_normal((3, 3, 1, 1)), 1, 1)


def test_conv_float32_output_keeps_dtype(rng):
    x = rng.standard_normal((1, 5, 5, 2)).astype(np.float32)
    w = rng.standard_normal((3, 3, 2, 4)).astype(np.float32)
    assert conv2d_forward(x, w, 1, 1).dtype == np.float32


@pytest.mark.parametrize("stride,padding", [(1, 1), (2, 1), (2, 0)])
def test_conv_backward_matches_finite_differences(rng, stride, padding):
    x = rng.standard_normal((2, 5, 5, 2))
    w = rng.standard_normal((3, 3, 2, 3))
    dout = rng.standard_normal(conv2d_forward(x, w, stride, padding).shape)
    dx, dw = conv2d_backward(dout, x, w, stride, padding)

    def loss(x_, w_):
        return float((conv2d_forward(x_, w_, stride, padding) * dout).sum())

    eps = 1e-5
    num_dw = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        plus, minus = w.copy(), w.copy()
        plus[idx] += eps
        minus[idx] -= eps
        num_dw[idx] = (loss(x, plus) - loss(x, minus)) / (2 * eps)
    num_dx = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        plus, minus = x.copy(), x.copy()
        plus[idx] += eps
        minus[idx] -= eps
        num_dx[idx] = (loss(plus, w) - loss(minus, w)) / (2 * eps)
    assert relative_error(dw, num_dw) < 1e-6
    assert relative_error(dx, num_dx) < 1e-6


def test_softmax_cross_entropy_uniform_logits():
    loss, grad = softmax_cross_entropy(np.zeros((2, 4)), np.array([0, 3]))
    assert loss == pytest.approx(np.log(4))
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)


def test_softmax_cross_entropy_confident_correct_prediction():
    loss, _ = softmax_cross_entropy(np.array([[60.0, 0.0, 0.0, 0.0]]), np.array([0]))
    assert loss == pytest.approx(0.0, abs=1e-12)


def test_softmax_cross_entropy_rejects_bad_label():
    with pytest.raises(InputError):
        softmax_cross_entropy(np.zeros((1, 3)), np.array([3]))


def test_pool_drops_odd_trailing_row():
    x = np.arange(2 * 5 * 4, dtype=np.float64).reshape(1, 5, 4, 2)
    out = Pool("pool", "max").forward(x, training=False, rng=None)
    assert out.shape == (1, 2, 2, 2)


def test_network_forward_returns_probabilities(toy_spec, rng):
    net = materialize(toy_spec, toy_spec.expand([4, 4, 4]), seed=0)
    probs = network_forward(net, rng.standard_normal((3, 8, 8, 3)))
    assert probs.shape == (3, toy_spec.classes)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_zero_classifier_gives_uniform_probabilities(toy_spec, rng):
    net = materialize(toy_spec, toy_spec.expand([4, 4, 4]), seed=0)
    net.leaf("classifier").weight[...] = 0
    probs = network_forward(net, rng.standard_normal((5, 8, 8, 3)))
    np.testing.assert_allclose(probs, 1.0 / toy_spec.classes, atol=1e-7)


def test_forward_is_bit_stable_under_seed(residual_spec, rng):
    batch = rng.standard_normal((3, *residual_spec.input_dims)).astype(np.float32)
    first = network_forward(materialize(residual_spec, residual_spec.expand([4, 4, 6, 6]), seed=5), batch)
    second = network_forward(materialize(residual_spec, residual_spec.expand([4, 4, 6, 6]), seed=5), batch)
    np.testing.assert_array_equal(first, second)


def test_network_forward_rejects_wrong_dims(toy_spec, rng):
    net = materialize(toy_spec, toy_spec.expand([4, 4, 4]), seed=0)
    with pytest.raises(ShapeError):
        net.forward(rng.standard_normal((1, 7, 8, 3)))


def test_network_backward_rejects_empty_batch(toy_spec):
    net = materialize(toy_spec, toy_spec.expand([4, 4, 4]), seed=0)
    with pytest.raises(InputError):
        network_backward(net, np.zeros((0, 8, 8, 3)), np.zeros(0, dtype=np.int64))


def test_network_gradients_match_finite_differences(every_layer_spec, rng):
    spec = every_layer_spec
    net = materialize(spec, spec.expand([2, 2, 2, 2]), seed=3, dtype=np.float64)
    assert net.param_count() < 1000
    batch = rng.standard_normal((4, *spec.input_dims))
    labels = np.array([0, 1, 2, 1])

    def loss():
        logits = net.forward(batch, training=True, rng=np.random.default_rng(7))
        return softmax_cross_entropy(logits, labels)[0]

    grads, _ = network_backward(net, batch, labels, np.random.default_rng(7))
    grads = {name: grad.copy() for name, grad in grads.items()}
    eps = 1e-5
    for name, param in net.parameters().items():
        numeric = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            original = param[idx]
            param[idx] = original + eps
            upper = loss()
            param[idx] = original - eps
            lower = loss()
            param[idx] = original
            numeric[idx] = (upper - lower) / (2 * eps)
        assert relative_error(grads[name], numeric) < 1e-6, name


def test_copy_is_independent(toy_spec):
    net = materialize(toy_spec, toy_spec.expand([4, 4, 4]), seed=0)
    clone = net.copy()
    clone.leaf("conv1").weight[...] = 0
    assert np.abs(net.leaf("conv1").weight).sum() > 0
