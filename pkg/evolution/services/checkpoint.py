"""Self-describing binary weight checkpoints.

Layout (all integers little-endian)::

    b"WSCK"  u32 version  u32 tensor_count
    per tensor: u16 name_len, name (utf-8), u8 ndim, ndim x u32 dims
    payloads: float32 little-endian, tensors in declaration order
"""

from __future__ import annotations

import logging
import os
import struct
from pathlib import Path

import numpy as np

from ..exceptions import FormatError, InputError, ShapeError
from .tensor import NetworkInstance

logger = logging.getLogger(__name__)

MAGIC = b"WSCK"
VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f4")


def encode_checkpoint(arrays: dict[str, np.ndarray]) -> bytes:
    header = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, array in arrays.items():
        encoded = name.encode("utf-8")
        header.append(struct.pack("<H", len(encoded)))
        header.append(encoded)
        header.append(struct.pack("<B", array.ndim))
        header.append(struct.pack(f"<{array.ndim}I", *array.shape))
    payload = [np.ascontiguousarray(array, dtype=PAYLOAD_DTYPE).tobytes() for array in arrays.values()]
    return b"".join(header + payload)


def decode_checkpoint(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise FormatError("not a weight checkpoint (bad magic)")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        offset = 12
        shapes: list[tuple[str, tuple[int, ...]]] = []
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            dims = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            shapes.append((name, tuple(dims)))
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"truncated or corrupt checkpoint header: {exc}") from exc

    arrays: dict[str, np.ndarray] = {}
    for name, dims in shapes:
        size = int(np.prod(dims, dtype=np.int64))
        end = offset + size * PAYLOAD_DTYPE.itemsize
        if end > len(blob):
            raise FormatError(f"checkpoint payload truncated at tensor {name!r}")
        arrays[name] = np.frombuffer(blob[offset:end], dtype=PAYLOAD_DTYPE).reshape(dims).astype(np.float32)
        offset = end
    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes after checkpoint payload")
    return arrays


def save_checkpoint(net: NetworkInstance, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(net.state()))
    os.replace(tmp, path)
    logger.debug("Saved checkpoint %s (%d tensors)", path, len(net.state()))
    return path


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    try:
        return decode_checkpoint(Path(path).read_bytes())
    except FileNotFoundError as exc:
        raise InputError(f"checkpoint not found: {path}") from exc


def restore_checkpoint(net: NetworkInstance, path: str | Path) -> NetworkInstance:
    """Load ``path`` into ``net`` in place; every tensor must match by name and shape."""
    arrays = read_checkpoint(path)
    expected = net.state()
    missing = sorted(set(expected) - set(arrays))
    extra = sorted(set(arrays) - set(expected))
    if missing or extra:
        raise ShapeError(f"checkpoint does not match the network: missing {missing[:3]}, unexpected {extra[:3]}")
    for full_name, current in expected.items():
        loaded = arrays[full_name]
        if loaded.shape != current.shape:
            raise ShapeError(f"{full_name}: checkpoint shape {loaded.shape} != network shape {current.shape}")
        leaf_name, key = full_name.split(".", 1)
        net.leaf(leaf_name).set_array(key, loaded.astype(net.dtype))
    return net


def delete_checkpoint(path: str | Path | None) -> None:
    if path is None:
        return
    try:
        Path(path).unlink()
    except FileNotFoundError:
        logger.warning("Checkpoint already gone: %s", path)
