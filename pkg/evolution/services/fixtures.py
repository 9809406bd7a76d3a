"""Bundled architectures and reference width schedules.

Residual fixtures use a fixed 64-channel 3x3 stem. With projection shortcuts
on every block the original ResNet-18 schedule counts 11.53 M parameters;
with identity shortcuts where shapes allow it counts 11.17 M. The
PyramidNet-110 fixture is a plain 110-convolution chain: zero-padded
identity shortcuts are not modelled, so only its parameter total is
meaningful.
"""

from __future__ import annotations

from ..exceptions import InputError
from .architecture import ArchitectureSpec, ChannelSchedule, LayerKind, LayerSpec, ShortcutKind

CIFAR_DIMS = (32, 32, 3)


def _stages(widths_per_stage: list[int], counts: list[int]) -> tuple[int, ...]:
    return tuple(w for w, n in zip(widths_per_stage, counts) for _ in range(n))


def resnet_spec(
    blocks_per_stage: tuple[int, ...] = (2, 2, 2, 2),
    shortcut: ShortcutKind = ShortcutKind.PROJECTION,
    stem_width: int = 64,
    name: str = "resnet",
    input_dims: tuple[int, int, int] = CIFAR_DIMS,
    classes: int = 10,
) -> ArchitectureSpec:
    layers = [LayerSpec(LayerKind.STEM, kernel=3, width=stem_width)]
    for stage, blocks in enumerate(blocks_per_stage):
        for index in range(blocks):
            stride = 2 if stage > 0 and index == 0 else 1
            layers.append(LayerSpec(LayerKind.BLOCK, kernel=3, stride=stride, shortcut=shortcut))
    return ArchitectureSpec(name, tuple(layers), input_dims, classes)


def resnet18_spec(shortcut: ShortcutKind = ShortcutKind.PROJECTION, classes: int = 10) -> ArchitectureSpec:
    return resnet_spec((2, 2, 2, 2), shortcut, name="resnet18", classes=classes)


def resnet34_spec(shortcut: ShortcutKind = ShortcutKind.PROJECTION, classes: int = 10) -> ArchitectureSpec:
    return resnet_spec((3, 4, 6, 3), shortcut, name="resnet34", classes=classes)


def vgg16_spec(classes: int = 10, input_dims: tuple[int, int, int] = CIFAR_DIMS) -> ArchitectureSpec:
    """13 convolutions, max pooling after conv 2, 4, 7, 10 and 13, a 512-unit hidden layer."""
    layers: list[LayerSpec] = []
    first = True
    for group in (2, 2, 3, 3, 3):
        for index in range(group):
            layers.append(LayerSpec(LayerKind.CONV))
            if index < group - 1:
                layers.append(LayerSpec(LayerKind.DROPOUT, rate=0.3 if first else 0.4))
            first = False
        layers.append(LayerSpec(LayerKind.POOL, pool="max"))
    layers.append(LayerSpec(LayerKind.DROPOUT, rate=0.5))
    layers.append(LayerSpec(LayerKind.DENSE, width=512))
    layers.append(LayerSpec(LayerKind.DROPOUT, rate=0.5))
    return ArchitectureSpec("vgg16", tuple(layers), input_dims, classes)


def plain_cnn_spec(
    convs: int = 3,
    pool_after: tuple[int, ...] = (1,),
    input_dims: tuple[int, int, int] = (8, 8, 3),
    classes: int = 4,
    name: str = "plain-cnn",
) -> ArchitectureSpec:
    """A chain of 3x3 convolutions with 2x2 average pooling after the listed ones."""
    layers: list[LayerSpec] = []
    for index in range(1, convs + 1):
        layers.append(LayerSpec(LayerKind.CONV))
        if index in pool_after:
            layers.append(LayerSpec(LayerKind.POOL, pool="avg"))
    return ArchitectureSpec(name, tuple(layers), input_dims, classes)


def residual_toy_spec(
    input_dims: tuple[int, int, int] = (8, 8, 3), classes: int = 4
) -> ArchitectureSpec:
    """Stem plus two projection-shortcut basic blocks, the second one strided."""
    return resnet_spec((1, 1), ShortcutKind.PROJECTION, stem_width=8, name="residual-toy", input_dims=input_dims, classes=classes)


def bottleneck_toy_spec(
    input_dims: tuple[int, int, int] = (8, 8, 3), classes: int = 4
) -> ArchitectureSpec:
    layers = (
        LayerSpec(LayerKind.STEM, width=8),
        LayerSpec(LayerKind.BOTTLENECK, shortcut=ShortcutKind.PROJECTION),
        LayerSpec(LayerKind.BOTTLENECK, stride=2, shortcut=ShortcutKind.PROJECTION),
    )
    return ArchitectureSpec("bottleneck-toy", layers, input_dims, classes)


def pyramidnet110_spec(classes: int = 10) -> ArchitectureSpec:
    """Counting fixture only: 110 plain convolutions, stride 2 at conv 39 and 75."""
    layers = []
    for index in range(1, 111):
        layers.append(LayerSpec(LayerKind.CONV, stride=2 if index in (39, 75) else 1))
    return ArchitectureSpec("pyramidnet110", tuple(layers), CIFAR_DIMS, classes)


FIXTURE_SPECS = {
    "resnet18": resnet18_spec,
    "resnet18-identity": lambda: resnet18_spec(ShortcutKind.IDENTITY),
    "resnet34": resnet34_spec,
    "vgg16": vgg16_spec,
    "plain-cnn": plain_cnn_spec,
    "plain-cnn-6": lambda: plain_cnn_spec(convs=6, pool_after=(2, 4), input_dims=(16, 16, 3)),
    "residual-toy": residual_toy_spec,
    "bottleneck-toy": bottleneck_toy_spec,
    "pyramidnet110": pyramidnet110_spec,
}


def fixture_spec(name: str) -> ArchitectureSpec:
    try:
        return FIXTURE_SPECS[name]()
    except KeyError:
        raise InputError(f"unknown fixture spec {name!r}; choose from {sorted(FIXTURE_SPECS)}") from None


RESNET18_ORIGINAL = ChannelSchedule(_stages([64, 128, 256, 512], [4, 4, 4, 4]))
RESNET18_CONSTANT = ChannelSchedule((256,) * 16)
RESNET18_DECREASING = ChannelSchedule(_stages([512, 256, 128, 64], [4, 4, 4, 4]))
RESNET18_MODIFIED = (
    ChannelSchedule((198, 200, 210, 216, 192, 194, 202, 208, 202, 200, 216, 218, 244, 254, 272, 284)),
    ChannelSchedule((200, 206, 226, 238, 212, 228, 242, 290, 258, 256, 280, 280, 286, 314, 320, 324)),
    ChannelSchedule((248, 272, 304, 336, 256, 272, 292, 298, 252, 264, 264, 266, 244, 248, 236, 230)),
)
RESNET18_MODIFIED_REVERSED = ChannelSchedule(tuple(reversed(RESNET18_MODIFIED[1].widths)))

RESNET34_ORIGINAL = ChannelSchedule(_stages([64, 128, 256, 512], [6, 8, 12, 6]))
RESNET34_MODIFIED = ChannelSchedule(
    (
        474, 420, 364, 330, 304, 280, 222, 208, 202, 192, 186, 178, 170, 166, 172, 166,
        166, 160, 152, 144, 140, 140, 136, 136, 134, 132, 136, 126, 128, 128, 126, 116,
    )
)

VGG16_ORIGINAL = ChannelSchedule(_stages([64, 128, 256, 512], [2, 2, 3, 6]))
VGG16_MODIFIED = ChannelSchedule((178, 176, 214, 220, 228, 230, 234, 236, 302, 304, 308, 316, 320))

PYRAMIDNET110_MODIFIED = ChannelSchedule(
    (60, 60)
    + tuple(w for w in (62, 70, 78, 58, 62, 66, 68, 56, 60, 60, 60, 56, 56) for _ in range(8))
    + (54,) * 4
)

# name -> (spec factory, schedule, published parameter count in millions)
REFERENCE_SCHEDULES = {
    "resnet18-original": ("resnet18", RESNET18_ORIGINAL, 11.54),
    "resnet18-original-identity": ("resnet18-identity", RESNET18_ORIGINAL, 11.18),
    "resnet18-constant": ("resnet18-identity", RESNET18_CONSTANT, 9.23),
    "resnet18-decreasing": ("resnet18-identity", RESNET18_DECREASING, 11.47),
    "resnet18-modified-1": ("resnet18", RESNET18_MODIFIED[0], 6.98),
    "resnet18-modified-2": ("resnet18", RESNET18_MODIFIED[1], 9.94),
    "resnet18-modified-3": ("resnet18", RESNET18_MODIFIED[2], 10.57),
    "resnet18-modified-reversed": ("resnet18", RESNET18_MODIFIED_REVERSED, 9.96),
    "resnet34-original": ("resnet34", RESNET34_ORIGINAL, 22.22),
    "resnet34-modified": ("resnet34", RESNET34_MODIFIED, 13.00),
    "vgg16-original": ("vgg16", VGG16_ORIGINAL, 15.00),
    "vgg16-modified": ("vgg16", VGG16_MODIFIED, 7.24),
    "pyramidnet110-modified": ("pyramidnet110", PYRAMIDNET110_MODIFIED, 3.86),
}
