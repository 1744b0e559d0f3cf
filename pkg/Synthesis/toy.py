"""Synthetic toy corpus: eight sound classes plus a background family.

Every clip is band-limited below 1.4 kHz so the default filterbank codec
reconstructs it. Clips are written as `<class>/<class>_NNN.wav` and read back
through `ingest_corpus` like any externally generated corpus.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import signal

from Codec.audio import write_wav


logger = logging.getLogger(__name__)

BAND_LIMIT_HZ = 1400.0
TARGET_RMS = 0.1


@dataclass
class ToyCorpusConfig:
    clips_per_class: int = 40
    background_clips: int = 12
    duration: float = 2.0
    sample_rate: int = 24000


def _noise(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.standard_normal(n)


def _bandpass(x: np.ndarray, low: float, high: float, sr: int) -> np.ndarray:
    sos = signal.butter(4, [low, high], btype="bandpass", fs=sr, output="sos")
    return signal.sosfiltfilt(sos, x)


def _lowpass(x: np.ndarray, cutoff: float, sr: int) -> np.ndarray:
    sos = signal.butter(6, cutoff, btype="lowpass", fs=sr, output="sos")
    return signal.sosfiltfilt(sos, x)


def low_hum(t, rng, sr):
    f0 = rng.uniform(90, 130)
    return sum(w * np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) for k, w in ((1, 1.0), (2, 0.5), (3, 0.25)))


def high_whistle(t, rng, sr):
    f = rng.uniform(1000, 1250)
    vibrato = rng.uniform(3, 7)
    phase = 2 * np.pi * f * t + (15.0 / vibrato) * np.sin(2 * np.pi * vibrato * t)
    return np.sin(phase)


def harmonic_buzz(t, rng, sr):
    f0 = rng.uniform(180, 240)
    harmonics = [k for k in range(1, 9) if k * f0 < BAND_LIMIT_HZ - 100]
    return sum(np.sin(2 * np.pi * k * f0 * t) / k for k in harmonics)


def rising_chirp(t, rng, sr):
    return signal.chirp(t, f0=rng.uniform(150, 300), t1=t[-1], f1=rng.uniform(1000, 1250), method="linear")


def falling_chirp(t, rng, sr):
    return signal.chirp(t, f0=rng.uniform(1000, 1250), t1=t[-1], f1=rng.uniform(150, 300), method="linear")


def rumble_noise(t, rng, sr):
    base = _lowpass(_noise(rng, t.size), rng.uniform(100, 160), sr)
    return base * (1.0 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t))


def hiss_band(t, rng, sr):
    low = rng.uniform(650, 750)
    return _bandpass(_noise(rng, t.size), low, low + 500, sr)


def pulse_beeps(t, rng, sr):
    f = rng.uniform(550, 800)
    period = rng.uniform(0.2, 0.3)
    gate = (np.mod(t, period) < 0.08).astype(np.float64)
    gate = np.convolve(gate, np.hanning(int(0.005 * sr)) / np.hanning(int(0.005 * sr)).sum(), mode="same")
    return np.sin(2 * np.pi * f * t) * gate


def background_noise(t, rng, sr):
    # roughly 1/f noise shaped into the codec band
    spectrum = np.fft.rfft(_noise(rng, t.size))
    freqs = np.fft.rfftfreq(t.size, 1.0 / sr)
    spectrum[1:] /= np.sqrt(freqs[1:])
    spectrum[0] = 0.0
    return np.fft.irfft(spectrum, n=t.size)


TOY_CLASSES: dict[str, Callable] = {
    "low_hum": low_hum,
    "high_whistle": high_whistle,
    "harmonic_buzz": harmonic_buzz,
    "rising_chirp": rising_chirp,
    "falling_chirp": falling_chirp,
    "rumble_noise": rumble_noise,
    "hiss_band": hiss_band,
    "pulse_beeps": pulse_beeps,
}


def render_toy_clip(label: str, rng: np.random.Generator, duration: float = 2.0, sample_rate: int = 24000) -> np.ndarray:
    if label == "background":
        generator = background_noise
    else:
        generator = TOY_CLASSES[label]
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    clip = _lowpass(np.asarray(generator(t, rng, sample_rate), dtype=np.float64), BAND_LIMIT_HZ, sample_rate)
    fade = min(int(0.02 * sample_rate), clip.size // 2)
    if fade and label != "background":
        ramp = np.linspace(0.0, 1.0, fade)
        clip[:fade] *= ramp
        clip[-fade:] *= ramp[::-1]
    level = np.sqrt(np.mean(clip**2))
    return clip * (TARGET_RMS / level) * rng.uniform(0.7, 1.3)


def generate_toy_corpus(out_dir: str | Path, cfg: ToyCorpusConfig | None = None, seed: int = 0) -> list[Path]:
    """Write the toy corpus under `out_dir`; returns the written paths in order."""
    cfg = cfg or ToyCorpusConfig()
    out_dir = Path(out_dir)
    plan = [(label, cfg.clips_per_class) for label in TOY_CLASSES] + [("background", cfg.background_clips)]
    written = []
    for class_idx, (label, count) in enumerate(plan):
        for i in range(count):
            rng = np.random.default_rng([seed, class_idx, i])
            clip = render_toy_clip(label, rng, cfg.duration, cfg.sample_rate)
            written.append(write_wav(out_dir / label / f"{label}_{i:03d}.wav", clip, cfg.sample_rate))
    logger.info("toy corpus: %d clips in %d classes under %s", len(written), len(plan), out_dir)
    return written
