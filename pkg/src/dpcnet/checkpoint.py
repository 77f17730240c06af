"""Named-parameter flat binary checkpoint format.

Layout (all integers little-endian u32):

    magic  b"DPCN"
    payload:
        version (currently 1)
        entry count
        per entry: name length, UTF-8 name, 4 shape extents, float32 LE data
    crc32 of payload

Parameter shapes are padded to 4 extents with leading 1s.  Loading
validates magic, version, CRC, then (optionally) shape agreement with a
model, and never applies a partial state.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"DPCN"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


class CheckpointFormatError(CheckpointError):
    """Bad magic, truncation, or unknown version."""


class CheckpointCRCError(CheckpointError):
    """Payload checksum mismatch."""


class CheckpointShapeError(CheckpointError):
    """Stored parameter shapes disagree with the target model."""


def _pad4(shape: tuple[int, ...]) -> tuple[int, int, int, int]:
    if len(shape) > 4:
        raise CheckpointError(f"parameter rank {len(shape)} > 4 unsupported")
    return (1,) * (4 - len(shape)) + tuple(shape)


def save_checkpoint(named_params: list[tuple[str, Tensor]], path) -> None:
    chunks = [struct.pack("<II", VERSION, len(named_params))]
    for name, p in named_params:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<4I", *_pad4(p.data.shape)))
        chunks.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    payload = b"".join(chunks)
    blob = MAGIC + payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if len(blob) < 4 + 8 + 4 or blob[:4] != MAGIC:
        raise CheckpointFormatError(f"not a checkpoint file: {path}")
    payload, (crc_stored,) = blob[4:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise CheckpointCRCError(f"CRC mismatch in {path}")
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(payload):
            raise CheckpointFormatError(f"truncated checkpoint payload: {path}")
        piece = payload[off : off + n]
        off += n
        return piece

    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointFormatError(f"unknown checkpoint version {version} in {path}")
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        shape = struct.unpack("<4I", take(16))
        n_vals = int(np.prod(shape))
        data = np.frombuffer(take(4 * n_vals), dtype="<f4").reshape(shape)
        state[name] = data.copy()
    if off != len(payload):
        raise CheckpointFormatError(f"trailing bytes in checkpoint payload: {path}")
    return state


def apply_checkpoint(model, state: dict[str, np.ndarray]) -> None:
    """Copy a loaded state into a model, all-or-nothing."""
    named = list(model.named_parameters())
    names = [n for n, _ in named]
    missing = [n for n in names if n not in state]
    extra = [n for n in state if n not in names]
    if missing or extra:
        raise CheckpointShapeError(
            f"parameter set mismatch: missing={missing[:3]} extra={extra[:3]}"
        )
    for name, p in named:
        want = _pad4(p.data.shape)
        got = tuple(state[name].shape)
        if want != got:
            raise CheckpointShapeError(
                f"shape mismatch for {name!r}: checkpoint {got}, model {want}"
            )
    for name, p in named:
        p.data = state[name].reshape(p.data.shape).astype(p.data.dtype)
