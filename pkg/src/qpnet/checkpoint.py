"""QPW1 checkpoint files.

Layout (little-endian throughout)::

    b"QPW1"
    u32 n, then n bytes of UTF-8 config echo ("[net]" section, key = value)
    u8 flags (bit 0: optimizer state follows the weights)
    every parameter array in declaration order, float32 row-major,
    then cond_mean and cond_std (aux_dim float32 each)
    if flags & 1: u64 step, first moments, second moments (declaration order)
    u64 checksum: 8-byte BLAKE2b digest of all preceding bytes
"""

from __future__ import annotations

import configparser
import hashlib
import io
import struct
from pathlib import Path

import numpy as np

from .dilation import NetConfig
from .errors import FormatError
from .net import ModelParams, param_shapes

MAGIC = b"QPW1"


def config_echo(config: NetConfig, extra: dict[str, dict] | None = None) -> str:
    cp = configparser.ConfigParser()
    cp["net"] = {k: str(v) for k, v in config.to_dict().items()}
    for section, values in (extra or {}).items():
        cp[section] = {k: str(v) for k, v in values.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def parse_echo(text: str) -> tuple[NetConfig, dict[str, dict]]:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if "net" not in cp:
        raise FormatError("checkpoint config echo has no [net] section")
    extra = {s: dict(cp[s]) for s in cp.sections() if s != "net"}
    return NetConfig.from_dict(dict(cp["net"])), extra


def _digest(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def save_checkpoint(path: str | Path, params: ModelParams, opt_state=None, extra: dict | None = None) -> None:
    out = io.BytesIO()
    out.write(MAGIC)
    echo = config_echo(params.config, extra).encode("utf-8")
    out.write(struct.pack("<I", len(echo)))
    out.write(echo)
    out.write(struct.pack("<B", 1 if opt_state is not None else 0))
    for name in params.names():
        out.write(np.ascontiguousarray(params[name], dtype="<f4").tobytes())
    out.write(np.ascontiguousarray(params.cond_mean, dtype="<f4").tobytes())
    out.write(np.ascontiguousarray(params.cond_std, dtype="<f4").tobytes())
    if opt_state is not None:
        out.write(struct.pack("<Q", opt_state.step))
        for moments in (opt_state.m, opt_state.v):
            for name in params.names():
                out.write(np.ascontiguousarray(moments[name], dtype="<f4").tobytes())
    body = out.getvalue()
    Path(path).write_bytes(body + _digest(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("checkpoint is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def array(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)


def load_checkpoint(path: str | Path):
    """Returns (params, opt_state or None, extra config sections)."""
    from .train import AdamState

    raw = Path(path).read_bytes()
    if len(raw) < 13 or raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a QPW1 checkpoint")
    body, digest = raw[:-8], raw[-8:]
    if _digest(body) != digest:
        raise FormatError(f"{path}: checksum mismatch")
    r = _Reader(body)
    r.take(4)
    (n,) = struct.unpack("<I", r.take(4))
    config, extra = parse_echo(r.take(n).decode("utf-8"))
    (flags,) = struct.unpack("<B", r.take(1))
    shapes = param_shapes(config)
    arrays = {name: r.array(shape) for name, shape in shapes}
    cond_mean = r.array((config.aux_dim,))
    cond_std = r.array((config.aux_dim,))
    params = ModelParams(config, arrays, cond_mean, cond_std)
    opt = None
    if flags & 1:
        (step,) = struct.unpack("<Q", r.take(8))
        m = {name: r.array(shape) for name, shape in shapes}
        v = {name: r.array(shape) for name, shape in shapes}
        opt = AdamState(step, m, v)
    if r.pos != len(body):
        raise FormatError(f"{path}: {len(body) - r.pos} unexpected trailing bytes")
    return params, opt, extra
