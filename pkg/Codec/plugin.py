from __future__ import annotations

import math

import numpy as np

from Engine.errors import InputError, ParameterError


class CodecPlugin:
    """Waveform <-> latent contract: 24 kHz mono audio, 50 Hz frames, 128 channels."""

    name = "base"
    sample_rate = 24000
    frame_rate = 50
    channels = 128

    @property
    def hop(self) -> int:
        return self.sample_rate // self.frame_rate

    def frames_for(self, samples: int) -> int:
        return math.ceil(samples / self.hop)

    def encode(self, waveform: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def decode(self, latent: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def encode(waveform: np.ndarray, codec: CodecPlugin, sample_rate: int | None = None) -> np.ndarray:
    rate = codec.sample_rate if sample_rate is None else sample_rate
    if rate != codec.sample_rate:
        raise InputError(f"codec {codec.name!r} takes {codec.sample_rate} Hz audio, got {rate} Hz")
    y = np.asarray(waveform, dtype=np.float64)
    if y.ndim != 1:
        raise InputError(f"codec input must be mono, got shape {y.shape}")
    if y.size == 0:
        raise InputError("codec input is empty")
    if not np.all(np.isfinite(y)):
        raise InputError("codec input has non-finite samples")
    latent = codec.encode(y)
    expected = (math.ceil(y.size / (codec.sample_rate // codec.frame_rate)), codec.channels)
    if latent.shape != expected:
        raise ParameterError(f"codec {codec.name!r} returned {latent.shape}, expected {expected}")
    return latent


def decode(latent: np.ndarray, codec: CodecPlugin) -> np.ndarray:
    x = np.asarray(latent)
    if x.ndim != 2 or x.shape[1] != codec.channels:
        raise ParameterError(f"codec {codec.name!r} decodes N x {codec.channels} latents, got {x.shape}")
    return codec.decode(x)
