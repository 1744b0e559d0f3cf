"""Training-free default codec.

A sqrt-Hann STFT with a 960-sample window and a 480-sample hop keeps its lowest
64 complex bins (25 Hz spacing, content below roughly 1.5 kHz). Real and
imaginary parts become the 128 latent channels. Frame n is centred on samples
[n * 480, (n + 1) * 480), so a clip of S samples gives exactly ceil(S / 480)
frames. Synthesis is weighted overlap-add normalized by the window envelope,
which reconstructs any signal inside the kept band.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Sequence

import numpy as np

from Storage.atomic import atomic_write_bytes

from .plugin import CodecPlugin


class FilterbankCodec(CodecPlugin):
    name = "filterbank"

    def __init__(self, scale: np.ndarray | None = None) -> None:
        self.n_fft = 2 * self.hop
        self.bins = self.channels // 2
        n = np.arange(self.n_fft)
        self.window = np.sin(np.pi * n / self.n_fft)
        self.scale = np.ones(self.channels) if scale is None else np.asarray(scale, dtype=np.float64)

    def _frames(self, y: np.ndarray) -> np.ndarray:
        n_frames = self.frames_for(y.size)
        half = self.hop // 2
        padded = np.zeros((n_frames + 1) * self.hop)
        padded[half : half + y.size] = y
        blocks = padded.reshape(n_frames + 1, self.hop)
        return np.concatenate([blocks[:-1], blocks[1:]], axis=1)

    def raw_encode(self, y: np.ndarray) -> np.ndarray:
        spectrum = np.fft.rfft(self._frames(y) * self.window, axis=1)[:, : self.bins]
        return np.concatenate([spectrum.real, spectrum.imag], axis=1)

    def encode(self, waveform: np.ndarray) -> np.ndarray:
        return self.raw_encode(np.asarray(waveform, dtype=np.float64)) * self.scale

    def decode(self, latent: np.ndarray) -> np.ndarray:
        raw = np.asarray(latent, dtype=np.float64) / self.scale
        n_frames = raw.shape[0]
        spectrum = np.zeros((n_frames, self.n_fft // 2 + 1), dtype=np.complex128)
        spectrum[:, : self.bins] = raw[:, : self.bins] + 1j * raw[:, self.bins :]
        frames = np.fft.irfft(spectrum, n=self.n_fft, axis=1) * self.window

        out = np.zeros((n_frames + 1, self.hop))
        out[:-1] += frames[:, : self.hop]
        out[1:] += frames[:, self.hop :]
        envelope = np.zeros((n_frames + 1, self.hop))
        envelope[:-1] += self.window[: self.hop] ** 2
        envelope[1:] += self.window[self.hop :] ** 2

        half = self.hop // 2
        signal = out.reshape(-1) / np.maximum(envelope.reshape(-1), 1e-12)
        return signal[half : half + n_frames * self.hop]

    def calibrate(self, waveforms: Sequence[np.ndarray]) -> np.ndarray:
        """Set per-channel scaling so latents have roughly unit variance."""
        raw = np.concatenate([self.raw_encode(np.asarray(w, dtype=np.float64)) for w in waveforms])
        std = raw.std(axis=0)
        # the imaginary DC channel is identically zero
        self.scale = np.where(std > 1e-8, 1.0 / np.maximum(std, 1e-8), 1.0)
        return self.scale

    def save(self, path: str | Path) -> Path:
        buffer = io.BytesIO()
        np.savez(buffer, scale=self.scale)
        return atomic_write_bytes(path, buffer.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> "FilterbankCodec":
        with np.load(Path(path), allow_pickle=False) as data:
            return cls(scale=data["scale"])
