"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"HGAN1"
    u32 entry count
    entries:  u16 name length, name (utf-8), u8 kind, u8 ndim,
              ndim x u64 dims, payload
    u32 CRC32 of everything above

``kind`` 0 is a float32 array, 1 is a utf-8 JSON blob (ndim 1, dim = byte
length). Weights are stored as float32, so bundles are rounded to float32
precision before saving (see ``TrainedBundle.round_weights``).
"""

import json
import struct
import zlib

import numpy as np

from .errors import CheckpointError
from .model import COMPONENTS, TimeGAN
from .preprocess import CoordScaler, MinMaxScaler
from .training import BUNDLE_VERSION, LossRecord, TrainConfig, TrainedBundle

MAGIC = b"HGAN1"
KIND_F32 = 0
KIND_JSON = 1


def _entry(name, kind, dims, payload):
    raw = name.encode("utf-8")
    head = struct.pack("<H", len(raw)) + raw + struct.pack("<BB", kind, len(dims))
    head += b"".join(struct.pack("<Q", d) for d in dims)
    return head + payload


def dumps(bundle):
    meta = {
        "version": bundle.version,
        "config": bundle.config.to_dict(),
        "rows": bundle.rows,
        "cols": bundle.cols,
        "train_scaler": [bundle.train_scaler.data_min, bundle.train_scaler.data_max],
        "test_scaler": [bundle.test_scaler.data_min, bundle.test_scaler.data_max],
        "coord_bounds": list(bundle.coord_scaler.bounds()),
        "history": [[r.phase, r.epoch, r.name, r.value] for r in bundle.history],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    entries = [_entry("meta", KIND_JSON, (len(blob),), blob)]
    for cname, comp in bundle.model.components().items():
        for pname, arr in comp.params.items():
            a32 = arr.astype("<f4")
            if not np.array_equal(a32.astype(np.float64), arr):
                raise CheckpointError(f"{cname}.{pname} is not float32-exact; call round_weights() first")
            entries.append(_entry(f"{cname}.{pname}", KIND_F32, arr.shape, a32.tobytes()))
    body = MAGIC + struct.pack("<I", len(entries)) + b"".join(entries)
    return body + struct.pack("<I", zlib.crc32(body))


def save_bundle(bundle, path):
    data = dumps(bundle)
    with open(path, "wb") as fh:
        fh.write(data)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(data):
    if len(data) < len(MAGIC) + 8:
        raise CheckpointError("checkpoint is truncated")
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic header)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checksum mismatch; file is corrupted")
    rd = _Reader(body)
    rd.take(len(MAGIC))
    (count,) = rd.unpack("<I")
    meta = None
    arrays = {}
    for _ in range(count):
        (nlen,) = rd.unpack("<H")
        name = rd.take(nlen).decode("utf-8")
        kind, ndim = rd.unpack("<BB")
        dims = tuple(rd.unpack("<Q")[0] for _ in range(ndim))
        size = int(np.prod(dims)) if dims else 1
        if kind == KIND_JSON:
            meta = json.loads(rd.take(size).decode("utf-8"))
        elif kind == KIND_F32:
            arrays[name] = np.frombuffer(rd.take(4 * size), dtype="<f4").reshape(dims).astype(np.float64)
        else:
            raise CheckpointError(f"unknown entry kind {kind}")
    if rd.pos != len(body):
        raise CheckpointError("trailing bytes after last entry")
    if meta is None:
        raise CheckpointError("checkpoint has no metadata entry")
    if meta.get("version") != BUNDLE_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('version')}")

    config = TrainConfig.from_dict(meta["config"])
    model = TimeGAN(meta["rows"], meta["cols"], config.n_layers, config.hidden,
                    config.supervisor_space, seed=0)
    for cname in COMPONENTS:
        for pname, arr in getattr(model, cname).params.items():
            key = f"{cname}.{pname}"
            if key not in arrays:
                raise CheckpointError(f"missing array {key}")
            if arrays[key].shape != arr.shape:
                raise CheckpointError(f"{key}: shape {arrays[key].shape} != {arr.shape}")
            arr[...] = arrays.pop(key)
    if arrays:
        raise CheckpointError(f"unexpected arrays: {sorted(arrays)[:3]}")
    return TrainedBundle(
        model=model,
        train_scaler=MinMaxScaler(*meta["train_scaler"]),
        test_scaler=MinMaxScaler(*meta["test_scaler"]),
        coord_scaler=CoordScaler(*meta["coord_bounds"]),
        config=config,
        history=[LossRecord(*r) for r in meta["history"]],
        version=meta["version"],
    )


def load_bundle(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
