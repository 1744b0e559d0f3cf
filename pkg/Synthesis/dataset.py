"""Mixture planning and dataset rendering.

Planning is pure: `plan_mixtures` draws every random choice from a per-item
seed derived from (master_seed, split, asset index, mixture index), so the
same corpus and master seed always yield the same specs and the same bytes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from tqdm import tqdm

from Codec.audio import read_wav, write_wav
from Engine.errors import ManifestError, ParameterError

from .corpus import load_asset
from .manifest import (
    BACKGROUND_SNR_RANGE,
    DATASET_MANIFEST,
    SNR_RANGE,
    AssetEntry,
    BackgroundPlacement,
    CorpusManifest,
    DatasetItem,
    DatasetManifest,
    EventPlacement,
    MixtureSpec,
    write_dataset_manifest,
)
from .mixing import AssetLoader, synthesize_mixture


logger = logging.getLogger(__name__)

SPLIT_ORDER = ("train", "valid", "test", "holdout")


@dataclass
class SynthConfig:
    sample_rate: int = 24000
    duration: float = 10.0
    mixtures_per_file: int = 3
    eval_mixtures_per_file: int = 1
    min_interferers: int = 1
    max_interferers: int = 3
    snr_range: tuple[float, float] = SNR_RANGE
    background_snr_range: tuple[float, float] = BACKGROUND_SNR_RANGE
    background_label: str = "background"
    splits: list[str] = field(default_factory=lambda: list(SPLIT_ORDER))

    def validate(self) -> None:
        if self.duration <= 0:
            raise ParameterError(f"duration must be positive, got {self.duration}")
        if self.mixtures_per_file < 1 or self.eval_mixtures_per_file < 0:
            raise ParameterError("mixtures per file must be >= 1 (train) and >= 0 (eval)")
        if not 1 <= self.min_interferers <= self.max_interferers <= 3:
            raise ParameterError(
                f"interferer count range [{self.min_interferers}, {self.max_interferers}] is outside [1, 3]"
            )
        for (low, high), (lo_bound, hi_bound) in (
            (self.snr_range, SNR_RANGE),
            (self.background_snr_range, BACKGROUND_SNR_RANGE),
        ):
            if not lo_bound <= low <= high <= hi_bound:
                raise ParameterError(f"SNR range ({low}, {high}) is outside [{lo_bound}, {hi_bound}]")
        unknown = set(self.splits) - set(SPLIT_ORDER)
        if unknown:
            raise ParameterError(f"unknown splits: {sorted(unknown)}")


@dataclass(frozen=True)
class PlannedItem:
    item_id: str
    split: str
    spec: MixtureSpec
    reference: AssetEntry
    reference_fallback: bool


def _onset(rng: np.random.Generator, duration: float, event_length: float) -> float:
    return float(rng.uniform(0.0, duration - min(1.0, event_length, duration)))


def plan_mixtures(cfg: SynthConfig, corpus: CorpusManifest, master_seed: int) -> list[PlannedItem]:
    cfg.validate()
    foreground = [entry for entry in corpus.entries if entry.label != cfg.background_label]
    backgrounds = [entry for entry in corpus.entries if entry.label == cfg.background_label]
    if not foreground:
        raise ManifestError("corpus holds no foreground assets")
    train_pool = [entry for entry in foreground if entry.split == "train"]

    planned: list[PlannedItem] = []
    fallbacks = 0
    for split in cfg.splits:
        split_idx = SPLIT_ORDER.index(split)
        targets = [entry for entry in foreground if entry.split == split]
        if not targets:
            continue
        per_file = cfg.mixtures_per_file if split == "train" else cfg.eval_mixtures_per_file
        split_backgrounds = [entry for entry in backgrounds if entry.split == split] or backgrounds

        for asset_idx, target in enumerate(targets):
            interferer_pool = [entry for entry in targets if entry.label != target.label]
            if not interferer_pool:
                # held-out classes mix against the training pool
                interferer_pool = [entry for entry in train_pool if entry.label != target.label]
            if not interferer_pool:
                raise ManifestError(f"no interferer candidates for class {target.label!r} in split {split!r}")
            same_class = [entry for entry in targets if entry.label == target.label and entry.asset_id != target.asset_id]

            for k in range(per_file):
                seq = np.random.SeedSequence([master_seed, split_idx, asset_idx, k])
                rng = np.random.default_rng(seq)
                item_seed = int(seq.generate_state(1)[0])

                n_interferers = int(rng.integers(cfg.min_interferers, cfg.max_interferers + 1))
                picks = rng.choice(len(interferer_pool), size=n_interferers, replace=len(interferer_pool) < n_interferers)
                interferers = tuple(
                    EventPlacement(
                        asset_id=interferer_pool[i].asset_id,
                        label=interferer_pool[i].label,
                        onset=_onset(rng, cfg.duration, interferer_pool[i].duration),
                        snr_db=float(rng.uniform(*cfg.snr_range)),
                    )
                    for i in picks
                )
                background = None
                if split_backgrounds:
                    chosen = split_backgrounds[int(rng.integers(len(split_backgrounds)))]
                    background = BackgroundPlacement(chosen.asset_id, float(rng.uniform(*cfg.background_snr_range)))

                if same_class:
                    reference, fallback = same_class[int(rng.integers(len(same_class)))], False
                else:
                    reference, fallback = target, True
                    fallbacks += 1

                spec = MixtureSpec(
                    target=EventPlacement(target.asset_id, target.label, _onset(rng, cfg.duration, target.duration)),
                    interferers=interferers,
                    background=background,
                    duration=cfg.duration,
                    seed=item_seed,
                    sample_rate=cfg.sample_rate,
                )
                spec.validate()
                planned.append(PlannedItem(f"{split}-{asset_idx:06d}-{k}", split, spec, reference, fallback))

    if fallbacks:
        logger.warning("%d items use their own target as reference (single-asset class)", fallbacks)
    return planned


def build_dataset(
    cfg: SynthConfig,
    corpus: CorpusManifest,
    master_seed: int,
    out_dir: str | Path,
    progress: bool = True,
) -> DatasetManifest:
    """Render every planned mixture to `out_dir/<split>/` and write the manifest."""
    out_dir = Path(out_dir)
    plan = plan_mixtures(cfg, corpus, master_seed)
    loader = AssetLoader(corpus)
    items: list[DatasetItem] = []
    for planned in tqdm(plan, desc="synth", disable=not progress):
        mixture, target = synthesize_mixture(planned.spec, corpus, loader)
        base = out_dir / planned.split / planned.item_id
        mixture_path = write_wav(base.with_name(f"{planned.item_id}_mix.wav"), mixture, cfg.sample_rate)
        target_path = write_wav(base.with_name(f"{planned.item_id}_target.wav"), target, cfg.sample_rate)
        reference_path = write_wav(
            base.with_name(f"{planned.item_id}_ref.wav"), loader(planned.reference.asset_id), cfg.sample_rate
        )
        items.append(
            DatasetItem(
                item_id=planned.item_id,
                split=planned.split,
                spec=planned.spec,
                mixture_path=mixture_path,
                target_path=target_path,
                reference_path=reference_path,
                label=planned.spec.target.label,
                reference_asset_id=planned.reference.asset_id,
                reference_fallback=planned.reference_fallback,
            )
        )
    manifest = DatasetManifest(items=items, root=out_dir)
    write_dataset_manifest(manifest, out_dir / DATASET_MANIFEST)
    logger.info("wrote %d mixtures %s to %s", len(items), manifest.counts(), out_dir)
    return manifest


def resynthesize(item: DatasetItem, corpus: CorpusManifest) -> tuple[np.ndarray, np.ndarray]:
    """Rebuild (mixture, target) for a manifest row from its spec alone."""
    return synthesize_mixture(item.spec, corpus)


def reference_waveform(item: DatasetItem, corpus: Optional[CorpusManifest] = None) -> np.ndarray:
    if corpus is not None:
        return load_asset(corpus.get(item.reference_asset_id))
    waveform, _ = read_wav(item.reference_path)
    return waveform
