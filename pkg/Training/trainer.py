"""Training loop, checkpointing, resume and few-shot fine-tuning."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset, default_collate
from tqdm import tqdm

from Codec.audio import read_wav
from Codec.filterbank import FilterbankCodec
from Codec.plugin import CodecPlugin
from Conditioning.embedder import EmbedderPlugin, LogMelEmbedder
from Engine.errors import CapabilityError, ConfigurationError, ManifestError, UnknownLabelError
from Engine.schedule import NoiseSchedule
from Model.backbone import BackboneConfig, ExtractionTransformer
from Model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from Synthesis.manifest import DatasetManifest

from .config import TrainConfig
from .data import ExtractionDataset
from .log import TRAINING_LOG, TrainingLog
from .step import training_step


logger = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.pt"
LAST_CHECKPOINT = "last.pt"
CODEC_ASSET = "codec.npz"
EMBEDDER_ASSET = "embedder.npz"


@dataclass
class TrainResult:
    best_path: Path
    last_path: Path
    history: list[dict[str, Any]] = field(default_factory=list)


class Trainer:
    """Owns the optimizer and the random streams of one training run.

    Two CPU generators are seeded from cfg.seed: one draws (t, eps, dropout)
    per step, the other shuffles each epoch. Both are stored in checkpoints so
    a resumed run continues the same streams.
    """

    def __init__(
        self,
        model: ExtractionTransformer,
        schedule: NoiseSchedule,
        cfg: TrainConfig,
        train_set: Dataset,
        valid_set: Optional[Dataset] = None,
        out_dir: str | Path = ".",
        device: str | torch.device = "cpu",
        metadata: Optional[dict[str, Any]] = None,
        progress: bool = True,
    ) -> None:
        cfg.validate()
        if not schedule.rescaled:
            raise ConfigurationError("training needs a zero-terminal-SNR (rescaled) schedule")
        if len(train_set) == 0:
            raise ManifestError("no training items")
        self.device = torch.device(device)
        self.model = model.to(self.device)
        self.schedule = schedule
        self.cfg = cfg
        self.train_set = train_set
        self.valid_set = valid_set if valid_set is not None and len(valid_set) > 0 else None
        self.out_dir = Path(out_dir)
        self.metadata = dict(metadata or {})
        self.progress = progress

        self.optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
        self.generator = torch.Generator().manual_seed(cfg.seed)
        self.shuffle_generator = torch.Generator().manual_seed(cfg.seed + 1)
        self.log = TrainingLog(self.out_dir / TRAINING_LOG)

        self.epoch = 0
        self.step = 0
        self.best_loss = math.inf
        self.history: list[dict[str, Any]] = []

    def _loader(self, dataset: Dataset, order: list[int]) -> DataLoader:
        return DataLoader(
            dataset,
            batch_size=self.cfg.batch_size,
            sampler=order,
            num_workers=self.cfg.num_workers,
            collate_fn=default_collate,
        )

    def _to_device(self, batch: dict[str, Any]) -> dict[str, Any]:
        return {k: v.to(self.device) if isinstance(v, torch.Tensor) else v for k, v in batch.items()}

    def train_epoch(self) -> float:
        self.model.train()
        if hasattr(self.train_set, "set_epoch"):
            self.train_set.set_epoch(self.epoch)
        order = torch.randperm(len(self.train_set), generator=self.shuffle_generator).tolist()

        total, count = 0.0, 0
        bar = tqdm(self._loader(self.train_set, order), desc=f"epoch {self.epoch + 1}", disable=not self.progress)
        for batch in bar:
            batch = self._to_device(batch)
            with torch.autocast(device_type=self.device.type, dtype=torch.bfloat16, enabled=self.cfg.amp):
                loss = training_step(batch, self.model, self.schedule, self.generator, self.cfg.uncond_fraction)
            self.optimizer.zero_grad(set_to_none=True)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(self.model.parameters(), self.cfg.grad_clip)
            self.optimizer.step()

            self.step += 1
            value = float(loss.item())
            size = batch["x0"].shape[0]
            total += value * size
            count += size
            self.log.step(self.step, self.epoch, value, self.optimizer.param_groups[0]["lr"])
            bar.set_postfix(loss=f"{value:.4f}")
        return total / count

    @torch.no_grad()
    def validate(self) -> Optional[float]:
        """Mean loss on the validation set, conditional path only, with a fixed noise stream."""
        if self.valid_set is None:
            return None
        self.model.eval()
        generator = torch.Generator().manual_seed(self.cfg.seed)
        total, count = 0.0, 0
        for batch in self._loader(self.valid_set, list(range(len(self.valid_set)))):
            batch = self._to_device(batch)
            loss = training_step(batch, self.model, self.schedule, generator, uncond_fraction=0.0)
            size = batch["x0"].shape[0]
            total += float(loss.item()) * size
            count += size
        return total / count

    def fit(self) -> TrainResult:
        best_path = self.out_dir / BEST_CHECKPOINT
        last_path = self.out_dir / LAST_CHECKPOINT
        while self.epoch < self.cfg.epochs:
            train_loss = self.train_epoch()
            valid_loss = self.validate()
            self.epoch += 1
            self.log.epoch(self.epoch, train_loss, valid_loss)
            self.history.append({"epoch": self.epoch, "train_loss": train_loss, "valid_loss": valid_loss})

            monitored = train_loss if valid_loss is None else valid_loss
            improved = monitored < self.best_loss
            if improved:
                self.best_loss = monitored
            self.save(last_path)
            if improved:
                self.save(best_path)
            logger.info(
                "epoch %d/%d: train %.5f valid %s%s",
                self.epoch, self.cfg.epochs, train_loss,
                "-" if valid_loss is None else f"{valid_loss:.5f}",
                " (best)" if improved else "",
            )
        if not best_path.exists():
            self.save(best_path)
        return TrainResult(best_path=best_path, last_path=last_path, history=list(self.history))

    def train_state(self) -> dict[str, Any]:
        return {
            "epoch": self.epoch,
            "step": self.step,
            "best_loss": self.best_loss,
            "optimizer": self.optimizer.state_dict(),
            "generator": self.generator.get_state(),
            "shuffle_generator": self.shuffle_generator.get_state(),
            "config": self.cfg.to_dict(),
            "history": list(self.history),
        }

    def save(self, path: str | Path) -> Path:
        return save_checkpoint(path, self.model, self.schedule, self.train_state(), self.metadata)

    def resume(self, checkpoint: Checkpoint) -> None:
        state = checkpoint.train_state
        if not state:
            raise ManifestError("checkpoint holds no trainer state to resume from")
        self.model.load_state_dict(checkpoint.params)
        self.optimizer.load_state_dict(state["optimizer"])
        self.generator.set_state(state["generator"])
        self.shuffle_generator.set_state(state["shuffle_generator"])
        self.epoch = int(state["epoch"])
        self.step = int(state["step"])
        self.best_loss = float(state["best_loss"])
        self.history = list(state.get("history", []))
        logger.info("resumed at epoch %d, step %d", self.epoch, self.step)


def prepare_plugins(
    manifest: DatasetManifest, codec: CodecPlugin, embedder: EmbedderPlugin, out_dir: str | Path
) -> dict[str, Any]:
    """Calibrate an uncalibrated filterbank codec and fit an unfitted log-mel embedder on the training split.

    Returns the plugin block stored in checkpoint metadata.
    """
    out_dir = Path(out_dir)
    train = manifest.select("train")
    plugins: dict[str, Any] = {
        "codec": {"name": codec.name, "asset": None},
        "embedder": {"name": embedder.name, "asset": None},
    }
    if isinstance(codec, FilterbankCodec):
        if np.all(codec.scale == 1.0):
            waveforms = [read_wav(item.mixture_path)[0] for item in train.items]
            waveforms += [read_wav(item.target_path)[0] for item in train.items]
            codec.calibrate(waveforms)
        plugins["codec"]["asset"] = str(codec.save(out_dir / CODEC_ASSET).resolve())
    if isinstance(embedder, LogMelEmbedder):
        if not embedder.centroids:
            embedder.fit(
                [read_wav(item.reference_path)[0] for item in train.items],
                [item.label for item in train.items],
            )
        plugins["embedder"]["asset"] = str(embedder.save(out_dir / EMBEDDER_ASSET).resolve())
    return plugins


def _datasets(
    manifest: DatasetManifest, codec: CodecPlugin, embedder: EmbedderPlugin, cfg: TrainConfig, dtype: torch.dtype
) -> tuple[ExtractionDataset, Optional[ExtractionDataset]]:
    train_items = manifest.select("train")
    if len(train_items) == 0:
        raise ManifestError("dataset manifest has no training items")
    valid_items = manifest.select("valid")
    train_set = ExtractionDataset(train_items, codec, embedder, cfg.condition, cfg.seed, dtype, cfg.latent_cache)
    valid_set = (
        ExtractionDataset(valid_items, codec, embedder, cfg.condition, cfg.seed, dtype, cfg.latent_cache)
        if len(valid_items)
        else None
    )
    return train_set, valid_set


def train(
    cfg: TrainConfig,
    manifest: DatasetManifest,
    codec: CodecPlugin,
    embedder: EmbedderPlugin,
    backbone: BackboneConfig,
    schedule: NoiseSchedule,
    out_dir: str | Path,
    device: str | torch.device = "cpu",
    resume_from: Optional[str | Path] = None,
    dtype: torch.dtype = torch.float32,
    progress: bool = True,
) -> TrainResult:
    if len(manifest) == 0:
        raise ManifestError("dataset manifest is empty")
    cfg.validate()
    out_dir = Path(out_dir)
    torch.manual_seed(cfg.seed)
    model = ExtractionTransformer(backbone).to(dtype)

    metadata = {
        "plugins": prepare_plugins(manifest, codec, embedder, out_dir),
        "condition": cfg.condition,
        "classes": manifest.select("train").labels(),
    }
    train_set, valid_set = _datasets(manifest, codec, embedder, cfg, dtype)
    trainer = Trainer(model, schedule, cfg, train_set, valid_set, out_dir, device, metadata, progress)
    if resume_from is not None:
        trainer.resume(load_checkpoint(resume_from))
    logger.info("training on %d items (%d validation)", len(train_set), len(valid_set) if valid_set else 0)
    return trainer.fit()


def ensure_class_support(manifest: DatasetManifest, embedder: EmbedderPlugin, condition: str) -> list[str]:
    """Check every class can be queried under `condition`; returns labels registered on the fly.

    Embedders with `register_class` learn a new text centroid from the items'
    reference clips; any other embedder must already know the class.
    """
    if condition in ("audio", "mixed") and not embedder.can_embed_audio:
        raise CapabilityError(f"embedder {embedder.name!r} cannot embed audio references")
    registered: list[str] = []
    if not embedder.can_embed_text:
        if condition == "audio":
            return registered
        raise CapabilityError(f"embedder {embedder.name!r} cannot embed text references")
    for label in manifest.labels():
        try:
            embedder.embed_text(label)
            continue
        except UnknownLabelError:
            if not hasattr(embedder, "register_class"):
                if condition == "audio":
                    continue
                raise UnknownLabelError(f"embedder {embedder.name!r} has no reference support for {label!r}") from None
        clips = [read_wav(item.reference_path)[0] for item in manifest.select(labels=[label]).items]
        embedder.register_class(label, clips)
        registered.append(label)
        logger.info("registered class %r from %d reference clips", label, len(clips))
    return registered


def finetune(
    checkpoint: str | Path,
    small_manifest: DatasetManifest,
    codec: CodecPlugin,
    embedder: EmbedderPlugin,
    out_dir: str | Path,
    cfg_overrides: Optional[dict[str, Any]] = None,
    base_cfg: Optional[TrainConfig] = None,
    device: str | torch.device = "cpu",
    dtype: torch.dtype = torch.float32,
    progress: bool = True,
) -> TrainResult:
    """Continue training on a few examples per class, with the few-shot defaults.

    Every item of `small_manifest` is trained on regardless of its split.
    """
    if len(small_manifest) == 0:
        raise ManifestError("few-shot manifest is empty; nothing to fine-tune on")
    cfg = (base_cfg or TrainConfig()).few_shot(**(cfg_overrides or {}))
    cfg.validate()
    out_dir = Path(out_dir)

    source = load_checkpoint(checkpoint)
    model = source.build_model().to(dtype)
    metadata = dict(source.metadata)
    metadata["finetuned_from"] = str(Path(checkpoint).resolve())
    metadata["few_shot_classes"] = small_manifest.labels()

    registered = ensure_class_support(small_manifest, embedder, cfg.condition)
    if isinstance(embedder, LogMelEmbedder):
        plugins = dict(metadata.get("plugins", {}))
        if registered or "embedder" not in plugins:
            plugins["embedder"] = {"name": embedder.name, "asset": str(embedder.save(out_dir / EMBEDDER_ASSET).resolve())}
        metadata["plugins"] = plugins

    train_set = ExtractionDataset(small_manifest, codec, embedder, cfg.condition, cfg.seed, dtype, cfg.latent_cache)
    torch.manual_seed(cfg.seed)
    trainer = Trainer(model, source.schedule, cfg, train_set, None, out_dir, device, metadata, progress)
    logger.info("fine-tuning on %d items in %d classes", len(train_set), len(small_manifest.labels()))
    return trainer.fit()
