"""Bit-exact binary checkpoints.

Layout (all integers little-endian u32 unless noted)::

    b"SFSR" | version | tensor count
    per tensor: name length | UTF-8 name | ndim | dims... | u8 dtype code | payload
    config length | UTF-8 key=value config echo

dtype code 0 is float32 and 1 is float64; payloads are little-endian, row-major.
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from .model import SwinFSR, SwinFsrConfig, build
from .nn import Module

MAGIC = b"SFSR"
VERSION = 1
DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
CODE_DTYPES = {v: k.newbyteorder("<") for k, v in DTYPE_CODES.items()}


class CheckpointError(ValueError):
    pass


def encode(model: SwinFSR) -> bytes:
    buf = io.BytesIO()
    params = list(model.named_parameters())
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(params)))
    for name, p in params:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack(f"<I{p.ndim}I", p.ndim, *p.shape))
        code = DTYPE_CODES.get(p.data.dtype)
        if code is None:
            raise CheckpointError(f"parameter {name} has unsupported dtype {p.data.dtype}")
        buf.write(struct.pack("<B", code))
        buf.write(np.ascontiguousarray(p.data, dtype=CODE_DTYPES[code]).tobytes())
    config = model.config.to_text().encode("utf-8")
    buf.write(struct.pack("<I", len(config)))
    buf.write(config)
    return buf.getvalue()


def save(model: SwinFSR, path: str | os.PathLike) -> None:
    data = encode(model)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint: needed {n} bytes at offset {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def decode(data: bytes) -> tuple[list[tuple[str, np.ndarray]], SwinFsrConfig]:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a SwinFSR checkpoint (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} unsupported (expected {VERSION})")
    tensors = []
    for _ in range(r.u32()):
        try:
            name = r.take(r.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError("corrupt tensor name") from exc
        shape = tuple(struct.unpack(f"<{(nd := r.u32())}I", r.take(4 * nd)))
        code = r.take(1)[0]
        if code not in CODE_DTYPES:
            raise CheckpointError(f"unknown dtype code {code} for {name}")
        dtype = CODE_DTYPES[code]
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(r.take(count * dtype.itemsize), dtype=dtype).reshape(shape)
        tensors.append((name, arr.astype(dtype.newbyteorder("="))))
    try:
        config = SwinFsrConfig.from_text(r.take(r.u32()).decode("utf-8"))
    except (UnicodeDecodeError, ValueError, TypeError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"invalid config echo: {exc}") from exc
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after config echo")
    return tensors, config


def load_into(model: Module, tensors: list[tuple[str, np.ndarray]]) -> None:
    """Copy decoded tensors into ``model``; every name and shape must match."""
    params = dict(model.named_parameters())
    names = [n for n, _ in tensors]
    if sorted(names) != sorted(params):
        missing = sorted(set(params) - set(names))
        extra = sorted(set(names) - set(params))
        raise CheckpointError(f"parameter set mismatch; missing={missing} unexpected={extra}")
    for name, arr in tensors:
        if params[name].shape != arr.shape:
            raise CheckpointError(f"shape mismatch for {name}: model {params[name].shape}, file {arr.shape}")
    for name, arr in tensors:
        params[name].data = arr.copy()


def load(path: str | os.PathLike, config: SwinFsrConfig | None = None) -> SwinFSR:
    """Rebuild the model stored at ``path``.

    With ``config`` the file's config echo must match it exactly. Nothing is
    returned unless the whole file parses.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    tensors, file_config = decode(data)
    if config is not None and config != file_config:
        raise CheckpointError("checkpoint config does not match the requested config")
    model = build(file_config, 0)
    load_into(model, tensors)
    return model
