"""SNR-controlled layering of a target, interferers and a background.

Every SNR is measured against the target's RMS over its placed extent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from Engine.errors import ManifestError, NumericError

from .corpus import load_asset
from .manifest import CorpusManifest, MixtureSpec


logger = logging.getLogger(__name__)

PEAK_LIMIT = 0.999


def rms(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean(x**2))) if x.size else 0.0


def snr_gain(target_rms: float, interferer_rms: float, snr_db: float) -> float:
    """Gain g with 20 * log10(target_rms / (g * interferer_rms)) == snr_db."""
    if target_rms <= 0 or interferer_rms <= 0:
        raise NumericError(
            f"SNR scaling needs positive RMS values, got {target_rms} and {interferer_rms}"
        )
    return float(target_rms / (interferer_rms * np.power(10.0, snr_db / 20.0)))


class AssetLoader:
    """Read corpus audio once per asset id."""

    def __init__(self, corpus: CorpusManifest) -> None:
        self.corpus = corpus
        self._cache: dict[str, np.ndarray] = {}

    def __call__(self, asset_id: str) -> np.ndarray:
        if asset_id not in self._cache:
            entry = self.corpus.get(asset_id)
            if not entry.path.exists():
                raise ManifestError(f"audio for {asset_id!r} is missing: {entry.path}")
            self._cache[asset_id] = load_asset(entry)
        return self._cache[asset_id]


@dataclass
class MixtureComponents:
    target: np.ndarray
    interferers: list[np.ndarray]
    background: Optional[np.ndarray]

    def mixture(self) -> np.ndarray:
        total = self.target.copy()
        for signal in self.interferers:
            total += signal
        if self.background is not None:
            total += self.background
        return total


def _place(signal: np.ndarray, onset: float, length: int, sample_rate: int) -> tuple[np.ndarray, int]:
    """Place `signal` at `onset` seconds in a zero buffer, truncating at the end."""
    start = int(round(onset * sample_rate))
    out = np.zeros(length)
    if start >= length:
        return out, 0
    count = min(signal.size, length - start)
    out[start : start + count] = signal[:count]
    return out, count


def render_components(
    spec: MixtureSpec, corpus: CorpusManifest, loader: Optional[AssetLoader] = None
) -> MixtureComponents:
    loader = loader or AssetLoader(corpus)
    sr = spec.sample_rate
    length = int(round(spec.duration * sr))

    target_audio = loader(spec.target.asset_id)
    target, placed = _place(target_audio, spec.target.onset, length, sr)
    if placed < target_audio.size:
        logger.info(
            "target %s truncated from %.2f s to %.2f s",
            spec.target.asset_id, target_audio.size / sr, placed / sr,
        )
    start = int(round(spec.target.onset * sr))
    target_rms = rms(target[start : start + placed])
    if target_rms <= 0:
        raise NumericError(f"target {spec.target.asset_id!r} is silent where it is placed")

    interferers = []
    for event in spec.interferers:
        audio = loader(event.asset_id)
        placed_event, count = _place(audio, event.onset, length, sr)
        begin = int(round(event.onset * sr))
        gain = snr_gain(target_rms, rms(placed_event[begin : begin + count]), event.snr_db)
        interferers.append(placed_event * gain)

    background = None
    if spec.background is not None:
        audio = loader(spec.background.asset_id)
        tiled = np.resize(audio, length)
        background = tiled * snr_gain(target_rms, rms(tiled), spec.background.snr_db)

    return MixtureComponents(target=target, interferers=interferers, background=background)


def synthesize_mixture(
    spec: MixtureSpec, corpus: CorpusManifest, loader: Optional[AssetLoader] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Return (mixture, ground-truth target), both rescaled together if the mixture would clip."""
    components = render_components(spec, corpus, loader)
    mixture = components.mixture()
    target = components.target
    peak = float(np.max(np.abs(mixture))) if mixture.size else 0.0
    if peak > PEAK_LIMIT:
        factor = PEAK_LIMIT / peak
        mixture = mixture * factor
        target = target * factor
    return mixture, target
