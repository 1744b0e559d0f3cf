from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from Engine.errors import InputError

from .atomic import atomic_write_bytes


LATENT_MAGIC = b"TSL1"
LATENT_VERSION = 1
# version, N, C, frame_rate
_HEADER = struct.Struct("<IIIf")


def save_latent(latent: np.ndarray, path: str | Path, frame_rate: float = 50.0) -> Path:
    data = np.asarray(latent)
    if data.ndim != 2:
        raise InputError(f"Latent dumps hold N x C arrays, got shape {data.shape}")
    n_frames, channels = data.shape
    header = _HEADER.pack(LATENT_VERSION, n_frames, channels, float(frame_rate))
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    return atomic_write_bytes(path, LATENT_MAGIC + header + payload)


def load_latent(path: str | Path) -> tuple[np.ndarray, float]:
    data = Path(path).read_bytes()
    if not data.startswith(LATENT_MAGIC):
        raise InputError(f"Invalid latent file: {path}")
    offset = len(LATENT_MAGIC)
    version, n_frames, channels, frame_rate = _HEADER.unpack_from(data, offset)
    if version != LATENT_VERSION:
        raise InputError(f"Unsupported latent file version {version}: {path}")
    offset += _HEADER.size
    expected = n_frames * channels * 4
    if len(data) - offset != expected:
        raise InputError(
            f"Expected {expected} payload bytes, got {len(data) - offset} bytes: {path}"
        )
    latent = np.frombuffer(data, dtype="<f4", offset=offset).reshape(n_frames, channels)
    return latent.astype(np.float32), float(frame_rate)
