"""Mono WAV I/O.

Dataset audio is written as 16-bit PCM: libsndfile stamps float WAV files with
a wall-clock PEAK chunk, which breaks byte-identical dataset trees.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import soundfile as sf

from Engine.errors import InputError
from Storage.atomic import atomic_write_bytes


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    try:
        data, sample_rate = sf.read(str(path), dtype="float64", always_2d=True)
    except (sf.SoundFileError, RuntimeError) as exc:
        raise InputError(f"cannot read audio {path}: {exc}") from exc
    return data.mean(axis=1), int(sample_rate)


def write_wav(path: str | Path, waveform: np.ndarray, sample_rate: int, subtype: str = "PCM_16") -> Path:
    data = np.asarray(waveform, dtype=np.float64).reshape(-1)
    if subtype.startswith("PCM"):
        data = np.clip(data, -1.0, 1.0)
    buffer = io.BytesIO()
    sf.write(buffer, data, sample_rate, subtype=subtype, format="WAV")
    return atomic_write_bytes(path, buffer.getvalue())
