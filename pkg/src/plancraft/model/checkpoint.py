"""Checkpoint format: versioned header + named float32 parameter table.

Layout: magic ``PLNC`` | u32 version | u32 header length | header JSON
(UTF-8) | raw little-endian float32 data.  The header lists parameter
names, shapes and byte offsets in table order.

Saving quantizes the in-memory model to the stored float32 values (cast
back up to the compute dtype), so a reload reproduces the saved model's
outputs bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .network import DTYPE, PlannerNetwork

MAGIC = b"PLNC"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(model: PlannerNetwork, path: str | Path, extra: dict | None = None):
    names, blobs, entries = [], [], []
    offset = 0
    for name, param in model.state_dict().items():
        arr = param.detach().cpu().numpy().astype("<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
        names.append(name)

    header = {
        "version": VERSION,
        "config": model.config.to_json(),
        "extra": extra or {},
        "params": entries,
    }
    head = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)

    # Quantize the live model to the stored values.
    state = model.state_dict()
    with torch.no_grad():
        for name in names:
            state[name].data = state[name].data.to(torch.float32).to(DTYPE)
    model.load_state_dict(state)


def load_checkpoint(path: str | Path):
    """Returns (model, extra) with parameters cast up to the compute dtype."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a planner checkpoint")
        version, head_len = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        header = json.loads(fh.read(head_len).decode("utf-8"))
        data = fh.read()

    config = ModelConfig.from_json(header["config"])
    model = PlannerNetwork(config)
    state = model.state_dict()
    for entry in header["params"]:
        name, shape, offset = entry["name"], tuple(entry["shape"]), entry["offset"]
        if name not in state:
            raise CheckpointError(f"{path}: unknown parameter {name}")
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=offset).reshape(shape)
        state[name] = torch.from_numpy(arr.copy()).to(DTYPE)
    model.load_state_dict(state)
    model.eval()
    return model, header["extra"]
