"""Binary model checkpoints.

Layout: 8-byte magic, little-endian u32 format version, u32 header length,
UTF-8 JSON header (layer specs, labels, SELU constants, parameter shapes),
then every parameter as little-endian float64 in layer order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from rfdsa.nnet.layers import SELUConfig, layer_from_spec
from rfdsa.nnet.model import NeuralModel

MAGIC = b"RFDSANN\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(model: NeuralModel) -> bytes:
    header = {
        "layers": [layer.spec() for layer in model.layers],
        "labels": list(model.labels),
        "selu": {"a": model.selu.a, "scale": model.selu.scale},
        "input_shape": list(model.input_shape),
        "shapes": [list(p.shape) for p in model.params],
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = model.flat().astype("<f8").tobytes()
    return MAGIC + struct.pack("<II", VERSION, len(hbytes)) + hbytes + blob


def loads(data: bytes) -> NeuralModel:
    if data[:8] != MAGIC:
        raise CheckpointError("not a model checkpoint")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    theta = np.frombuffer(data[16 + hlen:], dtype="<f8").astype(float)
    params, k = [], 0
    for shape in header["shapes"]:
        size = int(np.prod(shape))
        params.append(theta[k:k + size].reshape(shape).copy())
        k += size
    if k != theta.size:
        raise CheckpointError("parameter blob length does not match header")
    return NeuralModel([layer_from_spec(s) for s in header["layers"]], params, header["labels"],
                       SELUConfig(**header["selu"]), tuple(header["input_shape"]))


def save(model: NeuralModel, path) -> str:
    """Write ``model`` and return the SHA-256 of the file contents."""
    data = dumps(model)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load(path) -> NeuralModel:
    return loads(Path(path).read_bytes())
