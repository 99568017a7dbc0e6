"""Versioned little-endian checkpoint files.

Layout::

    magic      8 bytes  b"ASIPPO\\x00\\x01"
    version    u32
    obs_dim    u32
    act_dim    u32
    hidden     u32
    layers     u32
    step       u64
    cfg_hash   32 bytes (sha256 digest of the training configs)
    n_arrays   u32
    per array: u16 name length, utf-8 name, u8 ndim, u32 * ndim shape, f64 data
    crc32      u32 over every preceding byte
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .network import ActorCritic

MAGIC = b"ASIPPO\x00\x01"
VERSION = 1
_HEAD = struct.Struct("<8sIIIIIQ32sI")


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class ObsDimMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    model: ActorCritic
    step: int
    cfg_hash: str


def _arrays(model: ActorCritic) -> list[tuple[str, np.ndarray]]:
    items = sorted(model.params.items())
    norm = model.normalizer.state()
    items += [(f"norm.{k}", norm[k]) for k in ("count", "mean", "var")]
    return items


def encode(model: ActorCritic, step: int, cfg_hash: str = "0" * 64) -> bytes:
    digest = bytes.fromhex(cfg_hash)
    if len(digest) != 32:
        raise ValueError("cfg_hash must be a sha256 hex digest")
    arrays = _arrays(model)
    parts = [_HEAD.pack(MAGIC, VERSION, model.obs_dim, model.act_dim, model.hidden, model.layers, step, digest,
                        len(arrays))]
    for name, arr in arrays:
        a = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode(data: bytes, expected_obs_dim: int | None = None) -> Checkpoint:
    if len(data) < _HEAD.size + 4:
        raise CorruptCheckpointError("checkpoint is truncated")
    if data[:6] != MAGIC[:6]:
        raise CorruptCheckpointError("not a checkpoint file (bad magic)")
    magic, version, obs_dim, act_dim, hidden, layers, step, digest, n = _HEAD.unpack_from(data, 0)
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, this build reads {VERSION}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptCheckpointError("checkpoint checksum mismatch (truncated or corrupt)")
    if expected_obs_dim is not None and obs_dim != expected_obs_dim:
        raise ObsDimMismatchError(f"checkpoint expects {obs_dim}-dim observations, environment produces "
                                  f"{expected_obs_dim}")
    off = _HEAD.size
    arrays = {}
    try:
        for _ in range(n):
            (ln,) = struct.unpack_from("<H", body, off)
            off += 2
            name = body[off:off + ln].decode()
            off += ln
            (ndim,) = struct.unpack_from("<B", body, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", body, off)
            off += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).reshape(shape).astype(float)
            off += 8 * count
            arrays[name] = arr
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CorruptCheckpointError(f"checkpoint body unreadable: {exc}") from None
    if off != len(body):
        raise CorruptCheckpointError("trailing bytes in checkpoint")
    model = ActorCritic(obs_dim, act_dim, hidden, layers)
    for k in model.params:
        if k not in arrays or arrays[k].shape != model.params[k].shape:
            raise CorruptCheckpointError(f"parameter {k} missing or misshapen")
        model.params[k] = arrays[k]
    model.normalizer.load({k: arrays[f"norm.{k}"] for k in ("mean", "var", "count")})
    return Checkpoint(model, int(step), digest.hex())


def save_checkpoint(model: ActorCritic, step: int, path, cfg_hash: str = "0" * 64):
    data = encode(model, step, cfg_hash)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_checkpoint(path, expected_obs_dim: int | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode(fh.read(), expected_obs_dim)
