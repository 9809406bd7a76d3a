import numpy as np
import pytest

from evolution.services.architecture import ArchitectureSpec, LayerKind, LayerSpec, ShortcutKind
from evolution.services.datasets import synthetic_dataset
from evolution.services.fixtures import plain_cnn_spec, residual_toy_spec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_spec():
    """Three plain convolutions on 8x8 inputs."""
    return plain_cnn_spec()


@pytest.fixture
def six_conv_spec():
    return plain_cnn_spec(convs=6, pool_after=(2, 4), input_dims=(16, 16, 3), name="plain-cnn-6")


@pytest.fixture
def residual_spec():
    return residual_toy_spec()


@pytest.fixture
def every_layer_spec():
    """Tiny network with one of every layer type, for gradient checks."""
    layers = (
        LayerSpec(LayerKind.STEM, width=4),
        LayerSpec(LayerKind.CONV),
        LayerSpec(LayerKind.POOL, pool="max"),
        LayerSpec(LayerKind.BLOCK, stride=1, shortcut=ShortcutKind.PROJECTION),
        LayerSpec(LayerKind.BOTTLENECK, stride=2, shortcut=ShortcutKind.PROJECTION),
        LayerSpec(LayerKind.POOL, pool="avg"),
        LayerSpec(LayerKind.DROPOUT, rate=0.25),
        LayerSpec(LayerKind.DENSE, width=6),
    )
    return ArchitectureSpec("every-layer", layers, input_dims=(8, 8, 2), classes=3)


@pytest.fixture(scope="session")
def desk_data():
    """The small 4-class synthetic set used by the search smoke tests."""
    return synthetic_dataset(seed=0, count=200, classes=4, dims=(16, 16, 3))


@pytest.fixture
def run_root(tmp_path, settings):
    settings.WIDTHSEARCH = {**settings.WIDTHSEARCH, "run_root": str(tmp_path / "runs")}
    return tmp_path / "runs"
