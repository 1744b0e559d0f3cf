"""Reference embedders.

An embedder maps a waveform (and optionally a text query) into the shared
512-d reference space. `LogMelEmbedder` is the training-free default: log-mel
band statistics and spectral-shape trajectory statistics, projected by a fixed
random orthogonal map, standardized over a fitted corpus and unit-normalized.
Its text pathway returns stored class centroids of audio embeddings.
"""

from __future__ import annotations

import io
import logging
from pathlib import Path
from typing import Iterable, Sequence

import librosa
import numpy as np

from Engine.errors import CapabilityError, InputError, ParameterError, UnknownLabelError
from Storage.atomic import atomic_write_bytes

from .reference import EMBED_DIM, ReferenceEmbedding, unit_normalize
from .text import strip_template


logger = logging.getLogger(__name__)

MIN_REFERENCE_SECONDS = 0.3
SILENCE_RMS = 1e-8


def _rms(waveform: np.ndarray) -> float:
    y = np.asarray(waveform, dtype=np.float64).reshape(-1)
    return float(np.sqrt(np.mean(y**2))) if y.size else 0.0


class EmbedderPlugin:
    name = "base"
    sample_rate = 24000
    can_embed_audio = False
    can_embed_text = False

    def embed_audio(self, waveform: np.ndarray) -> np.ndarray:
        raise CapabilityError(f"embedder {self.name!r} cannot embed audio")

    def embed_text(self, text: str) -> np.ndarray:
        raise CapabilityError(f"embedder {self.name!r} cannot embed text")


class LogMelEmbedder(EmbedderPlugin):
    name = "logmel"
    can_embed_audio = True
    can_embed_text = True

    def __init__(
        self,
        sample_rate: int = 24000,
        n_mels: int = 64,
        n_fft: int = 1024,
        hop_length: int = 240,
        projection_seed: int = 0,
    ) -> None:
        self.sample_rate = sample_rate
        self.n_mels = n_mels
        self.n_fft = n_fft
        self.hop_length = hop_length
        self.projection_seed = projection_seed
        self.feature_dim = 2 * n_mels + 4
        rng = np.random.default_rng(projection_seed)
        q, _ = np.linalg.qr(rng.standard_normal((EMBED_DIM, self.feature_dim)))
        self.projection = q
        self.silence = unit_normalize(rng.standard_normal(EMBED_DIM))
        self.mean = np.zeros(EMBED_DIM)
        self.std = np.ones(EMBED_DIM)
        self.centroids: dict[str, np.ndarray] = {}

    def features(self, waveform: np.ndarray) -> np.ndarray:
        y = np.asarray(waveform, dtype=np.float64).reshape(-1)
        rms = _rms(y)
        if rms < SILENCE_RMS:
            return np.zeros(self.feature_dim)
        y = y / rms
        mel = librosa.feature.melspectrogram(
            y=y,
            sr=self.sample_rate,
            n_fft=self.n_fft,
            hop_length=self.hop_length,
            n_mels=self.n_mels,
            power=2.0,
        )
        log_mel = librosa.power_to_db(mel, ref=np.max, top_db=80.0)
        nyquist = self.sample_rate / 2
        centroid = librosa.feature.spectral_centroid(
            y=y, sr=self.sample_rate, n_fft=self.n_fft, hop_length=self.hop_length
        )[0] / nyquist
        rolloff = librosa.feature.spectral_rolloff(
            y=y, sr=self.sample_rate, n_fft=self.n_fft, hop_length=self.hop_length
        )[0] / nyquist
        return np.concatenate(
            [
                log_mel.mean(axis=1) / 80.0,
                log_mel.std(axis=1) / 80.0,
                [centroid.mean(), centroid.std(), rolloff.mean(), rolloff.std()],
            ]
        )

    def _project(self, waveform: np.ndarray) -> np.ndarray:
        return self.projection @ self.features(waveform)

    def embed_audio(self, waveform: np.ndarray) -> np.ndarray:
        # silence has no spectral shape; it gets its own fixed direction
        if _rms(waveform) < SILENCE_RMS:
            return self.silence.copy()
        z = (self._project(waveform) - self.mean) / self.std
        return unit_normalize(z)

    def embed_text(self, text: str) -> np.ndarray:
        label = strip_template(text)
        try:
            return self.centroids[label]
        except KeyError:
            raise UnknownLabelError(f"no centroid stored for class {label!r}") from None

    def fit(self, waveforms: Sequence[np.ndarray], labels: Sequence[str]) -> "LogMelEmbedder":
        if len(waveforms) != len(labels):
            raise ParameterError("fit needs one label per waveform")
        if len(waveforms) < 2:
            raise ParameterError("fit needs at least two waveforms")
        projected = np.stack([self._project(w) for w in waveforms])
        self.mean = projected.mean(axis=0)
        self.std = np.maximum(projected.std(axis=0), 1e-8)
        self.centroids = {}
        by_label: dict[str, list[np.ndarray]] = {}
        for waveform, label in zip(waveforms, labels):
            by_label.setdefault(label, []).append(waveform)
        for label in sorted(by_label):
            self.register_class(label, by_label[label])
        logger.info("fitted %s embedder on %d clips, %d classes", self.name, len(waveforms), len(by_label))
        return self

    def register_class(self, label: str, waveforms: Iterable[np.ndarray]) -> np.ndarray:
        embeddings = [self.embed_audio(w) for w in waveforms]
        if not embeddings:
            raise ParameterError(f"no waveforms given for class {label!r}")
        centroid = unit_normalize(np.mean(embeddings, axis=0))
        self.centroids[label] = centroid
        return centroid

    def save(self, path: str | Path) -> Path:
        labels = sorted(self.centroids)
        buffer = io.BytesIO()
        np.savez(
            buffer,
            config=np.array(
                [self.sample_rate, self.n_mels, self.n_fft, self.hop_length, self.projection_seed]
            ),
            mean=self.mean,
            std=self.std,
            labels=np.array(labels, dtype=str),
            centroids=np.stack([self.centroids[k] for k in labels]) if labels else np.zeros((0, EMBED_DIM)),
        )
        return atomic_write_bytes(path, buffer.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> "LogMelEmbedder":
        with np.load(Path(path), allow_pickle=False) as data:
            sample_rate, n_mels, n_fft, hop_length, seed = (int(v) for v in data["config"])
            embedder = cls(sample_rate, n_mels, n_fft, hop_length, seed)
            embedder.mean = data["mean"]
            embedder.std = data["std"]
            embedder.centroids = {
                str(label): centroid for label, centroid in zip(data["labels"], data["centroids"])
            }
        return embedder


def embed_audio_reference(
    waveform: np.ndarray, plugin: EmbedderPlugin, sample_rate: int | None = None
) -> ReferenceEmbedding:
    if not plugin.can_embed_audio:
        raise CapabilityError(f"embedder {plugin.name!r} cannot embed audio")
    rate = plugin.sample_rate if sample_rate is None else sample_rate
    if rate != plugin.sample_rate:
        raise InputError(f"reference audio is {rate} Hz, embedder expects {plugin.sample_rate} Hz")
    waveform = np.asarray(waveform)
    if waveform.ndim != 1:
        raise InputError(f"reference audio must be mono, got shape {waveform.shape}")
    if waveform.size < MIN_REFERENCE_SECONDS * rate:
        raise InputError(
            f"reference audio is {waveform.size / rate:.3f} s, need at least {MIN_REFERENCE_SECONDS} s"
        )
    if _rms(waveform) < SILENCE_RMS:
        raise InputError("reference audio is silent")
    return ReferenceEmbedding(data=unit_normalize(plugin.embed_audio(waveform)), provenance="audio")


def embed_text_reference(label: str, plugin: EmbedderPlugin) -> ReferenceEmbedding:
    if not plugin.can_embed_text:
        raise CapabilityError(f"embedder {plugin.name!r} cannot embed text")
    if not label or not label.strip():
        raise InputError("text query is empty")
    return ReferenceEmbedding(data=unit_normalize(plugin.embed_text(label)), provenance="text")
