"""Corpus ingestion: resample to 24 kHz mono, filter by duration and level, assign splits."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import librosa
import numpy as np
import soundfile as sf

from Codec.audio import read_wav, write_wav
from Engine.errors import ManifestError

from .manifest import CORPUS_MANIFEST, AssetEntry, CorpusManifest, write_corpus_manifest


logger = logging.getLogger(__name__)

AUDIO_SUFFIXES = {".wav", ".flac", ".ogg", ".aiff", ".aif"}


@dataclass
class IngestConfig:
    sample_rate: int = 24000
    min_duration: float = 0.3
    max_duration: float = 30.0
    min_rms: float = 1e-5
    valid_fraction: float = 0.1
    test_fraction: float = 0.1
    holdout_classes: list[str] = field(default_factory=list)


def ingest_corpus(
    root_dir: str | Path,
    out_dir: str | Path,
    class_map: Optional[Mapping[str, str]] = None,
    cfg: Optional[IngestConfig] = None,
) -> CorpusManifest:
    """Read every audio file under `root_dir` and write a 24 kHz corpus to `out_dir`.

    Labels come from `class_map` (keyed by path relative to root_dir, or by file
    stem) when given, otherwise from the parent directory name. Unreadable and silent
    files are skipped with a warning.
    """
    cfg = cfg or IngestConfig()
    root_dir, out_dir = Path(root_dir), Path(out_dir)
    files = sorted(
        p for p in root_dir.rglob("*") if p.is_file() and p.suffix.lower() in AUDIO_SUFFIXES
    )

    expected_labels = set(class_map.values()) if class_map else set()
    kept: list[tuple[str, str, Path, float]] = []
    unreadable = too_short = too_long = silent = 0
    for path in files:
        rel = path.relative_to(root_dir).as_posix()
        if class_map is not None:
            label = class_map.get(rel, class_map.get(path.stem))
            if label is None:
                logger.debug("no class for %s; skipped", rel)
                continue
        else:
            label = path.parent.name if path.parent != root_dir else "unlabeled"
            expected_labels.add(label)

        try:
            data, rate = sf.read(str(path), dtype="float64", always_2d=True)
        except (RuntimeError, OSError) as exc:
            unreadable += 1
            logger.warning("cannot read %s (%s); skipped", rel, exc)
            continue
        y = data.mean(axis=1)
        if rate != cfg.sample_rate:
            y = librosa.resample(y, orig_sr=rate, target_sr=cfg.sample_rate)
        duration = y.size / cfg.sample_rate
        if duration < cfg.min_duration:
            too_short += 1
            continue
        if duration > cfg.max_duration:
            too_long += 1
            continue
        if float(np.sqrt(np.mean(y**2))) <= cfg.min_rms:
            silent += 1
            logger.warning("%s is silent; skipped", rel)
            continue

        asset_id = f"{label}/{Path(rel).with_suffix('').as_posix().replace('/', '__')}"
        out_path = out_dir / "audio" / f"{asset_id}.wav"
        write_wav(out_path, y, cfg.sample_rate)
        kept.append((asset_id, label, out_path, duration))

    by_label: dict[str, list[tuple[str, str, Path, float]]] = {}
    for record in kept:
        by_label.setdefault(record[1], []).append(record)
    empty = sorted(label for label in expected_labels if label not in by_label)
    if empty:
        raise ManifestError(f"no usable audio for classes: {', '.join(empty)}")
    if not kept:
        raise ManifestError(f"no usable audio under {root_dir}")

    entries = []
    for label in sorted(by_label):
        splits = _assign_splits(by_label[label], label, cfg)
        for (asset_id, _, out_path, duration), split in zip(by_label[label], splits):
            entries.append(AssetEntry(asset_id, out_path, label, round(duration, 6), cfg.sample_rate, split))
    entries.sort(key=lambda entry: entry.asset_id)

    manifest = CorpusManifest(entries)
    write_corpus_manifest(manifest, out_dir / CORPUS_MANIFEST)
    logger.info(
        "ingested %d assets in %d classes (%d unreadable, %d too short, %d too long, %d silent)",
        len(entries), len(by_label), unreadable, too_short, too_long, silent,
    )
    if unreadable:
        logger.warning("%d unreadable files were skipped", unreadable)
    return manifest


def _assign_splits(records: list, label: str, cfg: IngestConfig) -> list[str]:
    if label in cfg.holdout_classes:
        return ["holdout"] * len(records)
    order = sorted(range(len(records)), key=lambda i: _stable_hash(records[i][0]))
    n = len(records)
    n_test = int(round(n * cfg.test_fraction))
    n_valid = int(round(n * cfg.valid_fraction))
    if n - n_test - n_valid < 1:
        n_test = n_valid = 0
    splits = [""] * n
    for rank, index in enumerate(order):
        if rank < n_test:
            splits[index] = "test"
        elif rank < n_test + n_valid:
            splits[index] = "valid"
        else:
            splits[index] = "train"
    return splits


def _stable_hash(text: str) -> int:
    return int(hashlib.sha1(text.encode("utf-8")).hexdigest()[:12], 16)


def load_asset(entry: AssetEntry) -> np.ndarray:
    waveform, rate = read_wav(entry.path)
    if rate != entry.sample_rate:
        raise ManifestError(f"{entry.asset_id}: file is {rate} Hz, manifest says {entry.sample_rate} Hz")
    return waveform
