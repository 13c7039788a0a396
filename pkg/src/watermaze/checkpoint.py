"""Binary checkpoint format for ``QTransformer`` parameters.

Layout, all little-endian, no padding::

    b"MWMQ"  u32 version
    config:  u64 embed_dim, num_layers, num_heads, ffn_dim, num_actions,
             max_seq_len, obs_dim; f64 dropout_p, distance_scale
    u32 record count, then per record:
             u32 name length, UTF-8 name, u32 rank, u64 extents[rank],
             float32 values (row-major)
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .autograd import Tensor
from .model import ModelConfig, QTransformer, init_params

MAGIC = b"MWMQ"
VERSION = 1

_INT_FIELDS = ("embed_dim", "num_layers", "num_heads", "ffn_dim", "num_actions", "max_seq_len", "obs_dim")
_FLOAT_FIELDS = ("dropout_p", "distance_scale")


class CheckpointError(ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def save_checkpoint(model, path):
    cfg = model.config
    out = [MAGIC, struct.pack("<I", VERSION)]
    out.append(struct.pack("<" + "Q" * len(_INT_FIELDS), *(getattr(cfg, f) for f in _INT_FIELDS)))
    out.append(struct.pack("<" + "d" * len(_FLOAT_FIELDS), *(getattr(cfg, f) for f in _FLOAT_FIELDS)))
    out.append(struct.pack("<I", len(model.params)))
    for name, t in model.params.items():
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack("<I", t.data.ndim))
        out.append(struct.pack("<" + "Q" * t.data.ndim, *t.data.shape))
        out.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(out))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise TruncatedError(f"checkpoint truncated at byte {self.pos} (wanted {n} more)")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, context_len=None):
    """Read a checkpoint into a fresh ``QTransformer``.

    With ``context_len`` set, raise ``CheckpointShapeError`` when the stored
    positional table is too short for that evaluation context.
    """
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise BadMagicError(f"{path}: not a watermaze checkpoint")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise VersionError(f"{path}: unsupported checkpoint version {version}")
    ints = r.unpack("<" + "Q" * len(_INT_FIELDS))
    floats = r.unpack("<" + "d" * len(_FLOAT_FIELDS))
    try:
        cfg = ModelConfig(**dict(zip(_INT_FIELDS, ints)), **dict(zip(_FLOAT_FIELDS, floats)))
    except ValueError as e:
        raise CheckpointError(f"{path}: invalid model config: {e}") from None

    expected = {k: v.shape for k, v in init_params(cfg, 0).items()}
    (count,) = r.unpack("<I")
    params = OrderedDict()
    for _ in range(count):
        (nlen,) = r.unpack("<I")
        name = r.take(nlen).decode("utf-8")
        (rank,) = r.unpack("<I")
        shape = r.unpack("<" + "Q" * rank)
        if name not in expected:
            raise CheckpointShapeError(f"{path}: unexpected parameter {name!r}")
        if tuple(shape) != expected[name]:
            raise CheckpointShapeError(f"{path}: {name} has shape {tuple(shape)}, config implies {expected[name]}")
        size = int(np.prod(shape)) if rank else 1
        values = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape)
        params[name] = Tensor(values.astype(np.float32), requires_grad=True)
    if r.pos != len(r.buf):
        raise CheckpointError(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    missing = set(expected) - set(params)
    if missing:
        raise CheckpointShapeError(f"{path}: missing parameters {sorted(missing)}")
    if context_len is not None and context_len > cfg.max_seq_len:
        raise CheckpointShapeError(
            f"{path}: positional table holds {cfg.max_seq_len} positions, context {context_len} requested"
        )
    return QTransformer(cfg, OrderedDict((k, params[k]) for k in expected))
