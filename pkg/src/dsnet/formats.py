"""Binary tensor/density snapshots and the checkpoint container.

``DCT1``: magic, four uint32 LE dims, float64 LE data (row-major).
``DMP1``: magic, two uint32 LE dims (height, width), float64 LE data.
Checkpoints are zip archives holding ``manifest.json`` (topology and run
metadata) and one ``tensors/<name>.dct`` entry per parameter.
"""

from __future__ import annotations

import io
import json
import struct
import zipfile
from pathlib import Path

import numpy as np

from .errors import ContractViolation

TENSOR_MAGIC = b"DCT1"
DENSITY_MAGIC = b"DMP1"


def tensor_to_bytes(arr) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim > 4:
        raise ContractViolation(f"DCT1 holds at most 4 dims, got shape {arr.shape}")
    shape = (1,) * (4 - arr.ndim) + arr.shape
    return TENSOR_MAGIC + struct.pack("<4I", *shape) + np.ascontiguousarray(arr).astype("<f8").tobytes()


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    if buf[:4] != TENSOR_MAGIC:
        raise ContractViolation(f"bad tensor magic {buf[:4]!r}")
    shape = struct.unpack("<4I", buf[4:20])
    count = int(np.prod(shape))
    payload = buf[20:]
    if len(payload) != 8 * count:
        raise ContractViolation(f"tensor payload is {len(payload)} bytes, header implies {8 * count}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)


def write_tensor(path, arr):
    Path(path).write_bytes(tensor_to_bytes(arr))


def read_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


def write_density(path, grid):
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ContractViolation(f"density map must be 2-D, got shape {grid.shape}")
    Path(path).write_bytes(DENSITY_MAGIC + struct.pack("<2I", *grid.shape) + grid.astype("<f8").tobytes())


def read_density(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:4] != DENSITY_MAGIC:
        raise ContractViolation(f"{path}: bad density magic {buf[:4]!r}")
    h, w = struct.unpack("<2I", buf[4:12])
    payload = buf[12:]
    if len(payload) != 8 * h * w:
        raise ContractViolation(f"{path}: payload is {len(payload)} bytes, header implies {8 * h * w}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(h, w)


# fixed timestamp keeps checkpoint bytes reproducible
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def _zip_write(zf, name, data):
    info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    zf.writestr(info, data)


def save_checkpoint(path, manifest: dict, tensors: dict[str, np.ndarray]):
    manifest = dict(manifest, tensors=sorted(tensors))
    with zipfile.ZipFile(path, "w") as zf:
        _zip_write(zf, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
        for name in sorted(tensors):
            _zip_write(zf, f"tensors/{name}.dct", tensor_to_bytes(tensors[name]))


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        tensors = {name: tensor_from_bytes(zf.read(f"tensors/{name}.dct")) for name in manifest["tensors"]}
    return manifest, tensors


def checkpoint_bytes(manifest: dict, tensors: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    save_checkpoint(buf, manifest, tensors)
    return buf.getvalue()
