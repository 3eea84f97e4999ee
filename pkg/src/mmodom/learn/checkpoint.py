"""Versioned binary checkpoints.

Layout (all integers little-endian)::

    b"MMODCKPT"  u32 version  u32 header_len  header (UTF-8 JSON)
    u32 n_records
    per record: u32 name_len, name (UTF-8), u32 ndim, u64 dims[ndim],
                float64 data (little-endian, C order)

Records named ``param/<name>``, ``adam_m/<name>`` and ``adam_v/<name>``.
"""
from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch

from ..errors import DataError
from .optim import AdamState

MAGIC = b"MMODCKPT"
VERSION = 1


@dataclass
class Checkpoint:
    params: "OrderedDict[str, torch.Tensor]"
    moments: AdamState
    epoch: int
    config_hash: str
    rng_state: dict[str, Any]
    config: dict[str, Any] = field(default_factory=dict)
    epoch_losses: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)

    def header(self) -> dict[str, Any]:
        return {
            "epoch": self.epoch,
            "adam_t": self.moments.t,
            "config_hash": self.config_hash,
            "rng_state": self.rng_state,
            "config": self.config,
            "epoch_losses": self.epoch_losses,
            "step_losses": self.step_losses,
        }


def config_hash(cfg: dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _record(name: str, t: torch.Tensor) -> bytes:
    arr = np.ascontiguousarray(t.detach().cpu().numpy(), dtype="<f8")
    nb = name.encode()
    out = [struct.pack("<I", len(nb)), nb, struct.pack("<I", arr.ndim)]
    out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    out.append(arr.tobytes())
    return b"".join(out)


def checkpoint_bytes(ck: Checkpoint) -> bytes:
    header = json.dumps(ck.header(), sort_keys=True).encode()
    recs = []
    for prefix, group in (("param", ck.params), ("adam_m", ck.moments.m), ("adam_v", ck.moments.v)):
        for k, t in group.items():
            recs.append(_record(f"{prefix}/{k}", t))
    return b"".join(
        [MAGIC, struct.pack("<II", VERSION, len(header)), header, struct.pack("<I", len(recs)), *recs]
    )


def save_checkpoint(ck: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(checkpoint_bytes(ck))
    tmp.replace(path)
    return path


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise DataError(f"{self.path}: checkpoint is truncated")
        b = self.buf[self.pos : self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str | Path, dtype=torch.float64) -> Checkpoint:
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(len(MAGIC)) != MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = r.unpack("<II")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    header = json.loads(r.take(hlen))
    (n,) = r.unpack("<I")
    groups = {"param": OrderedDict(), "adam_m": OrderedDict(), "adam_v": OrderedDict()}
    for _ in range(n):
        (nl,) = r.unpack("<I")
        name = r.take(nl).decode()
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}Q")
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape)
        prefix, key = name.split("/", 1)
        if prefix not in groups:
            raise DataError(f"{path}: unknown record {name!r}")
        groups[prefix][key] = torch.tensor(arr.astype(np.float64), dtype=dtype)
    if r.pos != len(r.buf):
        raise DataError(f"{path}: trailing bytes after last record")
    return Checkpoint(
        groups["param"],
        AdamState(groups["adam_m"], groups["adam_v"], header["adam_t"]),
        header["epoch"],
        header["config_hash"],
        header["rng_state"],
        header.get("config", {}),
        header.get("epoch_losses", []),
        header.get("step_losses", []),
    )
