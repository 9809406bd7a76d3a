import numpy as np
import pytest

from evolution.exceptions import FormatError, InputError, ShapeError
from evolution.services.architecture import build_initial_model, materialize
from evolution.services.checkpoint import (
    decode_checkpoint,
    delete_checkpoint,
    encode_checkpoint,
    read_checkpoint,
    restore_checkpoint,
    save_checkpoint,
)


def test_save_and_restore_reproduces_every_tensor(toy_spec, tmp_path):
    net = build_initial_model(toy_spec, 4, seed=0)
    path = save_checkpoint(net, tmp_path / "net.ckpt")
    fresh = build_initial_model(toy_spec, 4, seed=1)
    restore_checkpoint(fresh, path)
    for name, value in net.state().items():
        np.testing.assert_array_equal(fresh.state()[name], value)


def test_residual_network_round_trip(residual_spec, tmp_path):
    net = build_initial_model(residual_spec, 4, seed=0)
    path = save_checkpoint(net, tmp_path / "res.ckpt")
    assert set(read_checkpoint(path)) == set(net.state())


def test_header_is_self_describing():
    blob = encode_checkpoint({"conv1.weight": np.ones((3, 3, 2, 4), dtype=np.float32)})
    assert blob[:4] == b"WSCK"
    arrays = decode_checkpoint(blob)
    assert arrays["conv1.weight"].shape == (3, 3, 2, 4)
    assert arrays["conv1.weight"].dtype == np.float32


def test_width_mismatch_is_a_shape_error(toy_spec, tmp_path):
    path = save_checkpoint(build_initial_model(toy_spec, 4, seed=0), tmp_path / "net.ckpt")
    wider = materialize(toy_spec, toy_spec.expand([4, 6, 4]), seed=0)
    with pytest.raises(ShapeError):
        restore_checkpoint(wider, path)


def test_other_architecture_is_a_shape_error(toy_spec, residual_spec, tmp_path):
    path = save_checkpoint(build_initial_model(toy_spec, 4, seed=0), tmp_path / "net.ckpt")
    with pytest.raises(ShapeError):
        restore_checkpoint(build_initial_model(residual_spec, 4, seed=0), path)


def test_truncated_checkpoint_is_a_format_error(toy_spec, tmp_path):
    path = save_checkpoint(build_initial_model(toy_spec, 4, seed=0), tmp_path / "net.ckpt")
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(FormatError):
        read_checkpoint(path)


def test_truncated_header_is_a_format_error():
    with pytest.raises(FormatError):
        decode_checkpoint(b"WSCK\x01\x00")


def test_bad_magic_is_a_format_error():
    with pytest.raises(FormatError):
        decode_checkpoint(b"NOPE" + bytes(8))


def test_missing_checkpoint_is_an_input_error(tmp_path):
    with pytest.raises(InputError):
        read_checkpoint(tmp_path / "absent.ckpt")


def test_delete_tolerates_missing_file(tmp_path):
    delete_checkpoint(tmp_path / "absent.ckpt")
    delete_checkpoint(None)
