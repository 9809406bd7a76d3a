import numpy as np
import pytest

from evolution.exceptions import FormatError, InputError
from evolution.services.architecture import (
    ArchitectureSpec,
    ChannelSchedule,
    LayerKind,
    LayerSpec,
    build_initial_model,
    default_base_width,
    flop_breakdown,
    materialize,
    param_breakdown,
    param_count,
    segment_boundaries,
    slot_boundaries,
    validate_schedule,
)
from evolution.services.fixtures import REFERENCE_SCHEDULES, fixture_spec
from evolution.services.runs import resolve_spec

EXACT_COUNTS = {
    "resnet18-original": 11_528_266,
    "resnet18-original-identity": 11_173_962,
    "resnet18-constant": 9_024_330,
    "resnet18-decreasing": 11_460_426,
    "resnet18-modified-1": 6_970_114,
    "resnet18-modified-2": 9_927_226,
    "resnet18-modified-3": 10_560_398,
    "resnet18-modified-reversed": 9_950_186,
    "resnet34-original": 22_201_290,
    "resnet34-modified": 12_982_682,
    "vgg16-original": 14_986_698,
    "vgg16-modified": 7_226_704,
    "pyramidnet110-modified": 3_841_050,
}


def single_conv_spec():
    return ArchitectureSpec("single-conv", (LayerSpec(LayerKind.CONV),), input_dims=(8, 8, 3), classes=4)


def test_single_conv_weight_count_is_exact():
    spec = single_conv_spec()
    breakdown = param_breakdown(spec, ChannelSchedule((16,)))
    assert breakdown["conv1.weight"] == 432
    assert breakdown["conv1.bn"] == 32
    assert breakdown["classifier.weight"] == 64
    assert param_count(spec, ChannelSchedule((16,))) == 432 + 32 + 64 + 4


def test_single_conv_flops():
    flops = flop_breakdown(single_conv_spec(), ChannelSchedule((16,)))
    assert flops["conv1"] == 8 * 8 * 9 * 3 * 16
    assert flops["classifier"] == 16 * 4


@pytest.mark.parametrize("name", sorted(EXACT_COUNTS))
def test_reference_schedule_counts(name):
    fixture, schedule, published_millions = REFERENCE_SCHEDULES[name]
    count = param_count(fixture_spec(fixture), schedule)
    assert count == EXACT_COUNTS[name]
    assert abs(count / 1e6 - published_millions) / published_millions <= 0.03


def test_modified_resnet18_is_smaller_than_original():
    spec = fixture_spec("resnet18")
    _, original, _ = REFERENCE_SCHEDULES["resnet18-original"]
    _, modified, _ = REFERENCE_SCHEDULES["resnet18-modified-2"]
    assert param_count(spec, modified) < param_count(spec, original)


def test_segment_boundaries():
    assert segment_boundaries(fixture_spec("vgg16")).boundaries == (2, 4, 7, 10)
    assert segment_boundaries(fixture_spec("resnet18")).boundaries == (4, 8, 12)
    assert segment_boundaries(fixture_spec("resnet18")).count == 4


def test_trailing_pool_is_not_a_boundary():
    spec = ArchitectureSpec(
        "tail-pool",
        (LayerSpec(LayerKind.CONV), LayerSpec(LayerKind.POOL), LayerSpec(LayerKind.CONV), LayerSpec(LayerKind.POOL)),
        input_dims=(8, 8, 3),
        classes=2,
    )
    assert segment_boundaries(spec).boundaries == (1,)


def test_bottleneck_slots_drive_three_convolutions():
    spec = fixture_spec("bottleneck-toy")
    assert spec.conv_count == 6
    assert spec.slot_count == 2
    assert spec.expand([4, 6]).widths == (4, 4, 16, 6, 6, 24)
    assert slot_boundaries(spec).boundaries == (1,)


def test_validate_schedule_rejects_odd_width(toy_spec):
    with pytest.raises(InputError):
        validate_schedule(toy_spec, ChannelSchedule((4, 5, 4)))


def test_validate_schedule_rejects_wrong_length(toy_spec):
    with pytest.raises(InputError):
        validate_schedule(toy_spec, ChannelSchedule((4, 4)))


def test_validate_schedule_rejects_broken_bottleneck_ratio():
    with pytest.raises(InputError):
        validate_schedule(fixture_spec("bottleneck-toy"), ChannelSchedule((4, 4, 12, 6, 6, 24)))


def test_spec_rejects_dense_before_conv():
    with pytest.raises(InputError):
        ArchitectureSpec("bad", (LayerSpec(LayerKind.DENSE, width=8), LayerSpec(LayerKind.CONV)))


def test_spec_rejects_shortcut_on_plain_conv():
    with pytest.raises(InputError):
        ArchitectureSpec("bad", (LayerSpec(LayerKind.CONV, shortcut="projection"),))


def test_from_dict_rejects_inconsistent_downsample_flag():
    with pytest.raises(FormatError):
        ArchitectureSpec.from_dict({"layers": [{"kind": "conv", "stride": 1, "downsample": True}]})


def test_resolve_spec_reads_json_file(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text('{"name": "two", "input_dims": [8, 8, 3], "classes": 2, "layers": [{"kind": "conv"}, {"kind": "conv"}]}')
    spec = resolve_spec(str(path))
    assert spec.conv_count == 2
    assert spec.classes == 2


def test_resolve_spec_accepts_inline_document():
    spec = resolve_spec({"name": "inline", "layers": [{"kind": "conv"}, {"kind": "pool"}, {"kind": "conv"}]})
    assert spec.name == "inline"
    assert spec.conv_count == 2


def test_resolve_spec_reports_invalid_document_as_input_error():
    with pytest.raises(InputError, match="invalid architecture spec"):
        resolve_spec({"layers": [{"kind": "conv", "stride": 1, "downsample": True}]})


@pytest.mark.parametrize("fixture", ["plain-cnn", "residual-toy", "bottleneck-toy"])
def test_materialized_parameters_match_counter(fixture):
    spec = fixture_spec(fixture)
    schedule = spec.expand([6] * spec.slot_count)
    net = materialize(spec, schedule, seed=0)
    assert net.param_count() == param_count(spec, schedule)
    assert net.widths() == schedule.widths


def test_materialize_is_seeded(toy_spec):
    schedule = toy_spec.expand([4, 4, 4])
    a = materialize(toy_spec, schedule, seed=3)
    b = materialize(toy_spec, schedule, seed=3)
    np.testing.assert_array_equal(a.leaf("conv2").weight, b.leaf("conv2").weight)


def test_default_base_width():
    assert default_base_width(fixture_spec("resnet18")) == 32
    _, original, _ = REFERENCE_SCHEDULES["vgg16-original"]
    assert default_base_width(fixture_spec("vgg16"), original) == 32


def test_build_initial_model_rejects_odd_base(toy_spec):
    with pytest.raises(InputError):
        build_initial_model(toy_spec, 5)
