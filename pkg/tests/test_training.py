import math

import numpy as np
import pytest
import torch
from torch import nn

from Codec.filterbank import FilterbankCodec
from Conditioning.embedder import EmbedderPlugin, LogMelEmbedder
from Engine.errors import CapabilityError, ConfigurationError, ManifestError, TrainingDivergedError, UnknownLabelError
from Engine.process import batch_coefficients
from Engine.schedule import build_schedule
from Model.backbone import ExtractionTransformer
from Model.checkpoint import load_checkpoint
from Synthesis.manifest import DatasetManifest
from Training.config import TrainConfig
from Training.data import ExtractionDataset
from Training.log import TRAINING_LOG, TrainingLog
from Training.step import draw_training_noise, training_step
from Training.trainer import BEST_CHECKPOINT, LAST_CHECKPOINT, ensure_class_support, finetune, train


class StubModel(nn.Module):
    """Velocity predictor with a learnable null reference and a pluggable rule."""

    def __init__(self, rule, schedule=None):
        super().__init__()
        self.null_ref = nn.Parameter(torch.full((4,), 7.0, dtype=torch.float64))
        self.weight = nn.Parameter(torch.zeros((), dtype=torch.float64))
        self.rule = rule
        self.schedule = schedule
        self.seen_refs = []
        self.x0 = None

    def null_embedding(self):
        return self.null_ref

    def forward(self, x_t, x_m, ref, t):
        self.seen_refs.append(ref.detach().clone())
        return self.rule(self, x_t, x_m, ref, t)


def oracle_rule(model, x_t, x_m, ref, t):
    a, b = batch_coefficients(model.schedule, t, x_t)
    return (a * x_t - model.x0) / b


def zero_rule(model, x_t, x_m, ref, t):
    return model.weight * x_t


def ref_rule(model, x_t, x_m, ref, t):
    return x_t + ref.sum(dim=-1).reshape(-1, 1, 1)


def nan_rule(model, x_t, x_m, ref, t):
    return x_t * math.nan


def make_batch(batch=6, frames=5, channels=3, seed=0):
    gen = torch.Generator().manual_seed(seed)
    return {
        "x0": torch.randn(batch, frames, channels, generator=gen, dtype=torch.float64),
        "x_m": torch.randn(batch, frames, channels, generator=gen, dtype=torch.float64),
        "ref": torch.randn(batch, 4, generator=gen, dtype=torch.float64),
    }


def test_oracle_predictor_has_zero_loss(rescaled_schedule):
    batch = make_batch()
    model = StubModel(oracle_rule, rescaled_schedule)
    model.x0 = batch["x0"]
    loss = training_step(batch, model, rescaled_schedule, torch.Generator().manual_seed(1))
    assert loss.item() <= 1e-20


def test_zero_predictor_matches_closed_form(rescaled_schedule):
    batch = make_batch()
    loss = training_step(batch, StubModel(zero_rule), rescaled_schedule, torch.Generator().manual_seed(2))
    t, eps, _ = draw_training_noise(batch["x0"], rescaled_schedule, torch.Generator().manual_seed(2), 0.1)
    a, b = batch_coefficients(rescaled_schedule, t, batch["x0"])
    expected = ((a * eps - b * batch["x0"]) ** 2).mean()
    assert loss.item() == pytest.approx(expected.item(), rel=1e-12)


def test_loss_is_invariant_to_batch_order(rescaled_schedule, tiny_config, monkeypatch):
    torch.manual_seed(0)
    model = ExtractionTransformer(tiny_config).double()
    with torch.no_grad():
        for param in model.parameters():
            param.add_(0.05 * torch.randn_like(param))
    gen = torch.Generator().manual_seed(4)
    batch = {
        "x0": torch.randn(4, 5, 8, generator=gen, dtype=torch.float64),
        "x_m": torch.randn(4, 5, 8, generator=gen, dtype=torch.float64),
        "ref": torch.randn(4, 512, generator=gen, dtype=torch.float64),
    }
    t = torch.tensor([3, 17, 40, 50])
    eps = torch.randn(4, 5, 8, generator=gen, dtype=torch.float64)
    drop = torch.tensor([False, True, False, False])
    perm = torch.tensor([2, 0, 3, 1])

    monkeypatch.setattr("Training.step.draw_training_noise", lambda *args: (t, eps, drop))
    straight = training_step(batch, model, rescaled_schedule, torch.Generator())
    monkeypatch.setattr("Training.step.draw_training_noise", lambda *args: (t[perm], eps[perm], drop[perm]))
    shuffled = training_step({k: v[perm] for k, v in batch.items()}, model, rescaled_schedule, torch.Generator())
    torch.testing.assert_close(shuffled, straight, rtol=1e-10, atol=0.0)


def test_timesteps_cover_the_full_range(rescaled_schedule):
    x0 = torch.zeros(20000, 1, 1)
    t, eps, drop = draw_training_noise(x0, rescaled_schedule, torch.Generator().manual_seed(3), 0.1)
    assert int(t.min()) == 1 and int(t.max()) == rescaled_schedule.T
    assert eps.shape == x0.shape
    assert drop.float().mean().item() == pytest.approx(0.1, abs=0.01)


def test_full_dropout_feeds_only_the_null_reference(rescaled_schedule):
    model = StubModel(ref_rule)
    training_step(make_batch(), model, rescaled_schedule, torch.Generator().manual_seed(4), uncond_fraction=1.0)
    (ref,) = model.seen_refs
    assert torch.equal(ref, model.null_ref.detach().expand(6, 4))


def test_no_dropout_keeps_references(rescaled_schedule):
    batch = make_batch()
    model = StubModel(ref_rule)
    loss = training_step(batch, model, rescaled_schedule, torch.Generator().manual_seed(5), uncond_fraction=0.0)
    assert torch.equal(model.seen_refs[0], batch["ref"])
    loss.backward()
    assert model.null_ref.grad is None or torch.count_nonzero(model.null_ref.grad) == 0


def test_null_reference_learns_from_dropped_items(rescaled_schedule):
    model = StubModel(ref_rule)
    loss = training_step(make_batch(), model, rescaled_schedule, torch.Generator().manual_seed(6), uncond_fraction=1.0)
    loss.backward()
    assert torch.count_nonzero(model.null_ref.grad) > 0


def test_mixture_is_always_passed(rescaled_schedule):
    batch = make_batch()
    seen = []

    def rule(model, x_t, x_m, ref, t):
        seen.append(x_m)
        return x_t

    training_step(batch, StubModel(rule), rescaled_schedule, torch.Generator().manual_seed(7), uncond_fraction=1.0)
    assert seen[0] is batch["x_m"]


def test_divergence_carries_diagnostics(rescaled_schedule):
    with pytest.raises(TrainingDivergedError) as info:
        training_step(make_batch(), StubModel(nan_rule), rescaled_schedule, torch.Generator().manual_seed(8))
    assert len(info.value.diagnostics["t"]) == 6
    assert {"x0_norm", "x_m_norm", "ref_norm", "v_pred_norm"} <= set(info.value.diagnostics)


def test_config_defaults_and_validation():
    cfg = TrainConfig()
    assert (cfg.lr, cfg.batch_size, cfg.epochs, cfg.uncond_fraction) == (1e-4, 128, 100, 0.1)
    shot = cfg.few_shot()
    assert (shot.lr, shot.batch_size, shot.epochs) == (1e-5, 32, 20)
    assert cfg.few_shot(epochs=2).epochs == 2
    for bad in ({"uncond_fraction": 1.5}, {"condition": "video"}, {"lr_schedule": "cosine"}, {"lr": 0.0}, {"latent_cache": -1}):
        with pytest.raises(ConfigurationError):
            TrainConfig(**bad).validate()


def test_empty_manifests_are_rejected(codec_config, short_schedule, tmp_path):
    empty = DatasetManifest([])
    with pytest.raises(ManifestError):
        train(TrainConfig(), empty, FilterbankCodec(), LogMelEmbedder(), codec_config, short_schedule, tmp_path)
    with pytest.raises(ManifestError):
        ExtractionDataset(empty, FilterbankCodec(), LogMelEmbedder())
    with pytest.raises(ManifestError):
        finetune(tmp_path / "missing.pt", empty, FilterbankCodec(), LogMelEmbedder(), tmp_path)


def test_training_refuses_unrescaled_schedule(toy_dataset, codec_config, tmp_path):
    plain = build_schedule(50, 0.00085, 0.012)
    with pytest.raises(ConfigurationError, match="rescaled"):
        train(TrainConfig(epochs=1), toy_dataset, FilterbankCodec(), LogMelEmbedder(), codec_config, plain, tmp_path)
    assert not (tmp_path / BEST_CHECKPOINT).exists()


def test_dataset_items(toy_dataset):
    embedder = LogMelEmbedder()
    train_items = toy_dataset.select("train")
    embedder.fit([np.sin(np.arange(24000) * f) for f in (0.05, 0.1, 0.2)], ["low_hum", "high_whistle", "other"])
    dataset = ExtractionDataset(train_items, FilterbankCodec(), embedder, condition="audio")
    item = dataset[0]
    assert item["x0"].shape == item["x_m"].shape == (50, 128)
    assert item["ref"].shape == (512,)
    assert item["modality"] == "audio"
    assert item["label"] == train_items.items[0].label


def test_latent_cache_is_bounded(toy_dataset):
    train_items = toy_dataset.select("train")
    bounded = ExtractionDataset(train_items, FilterbankCodec(), LogMelEmbedder(), cache_size=2)
    first = [bounded.latents(i) for i in range(3)]
    assert list(bounded._latents) == [1, 2]
    again = bounded.latents(0)
    assert list(bounded._latents) == [2, 0]
    torch.testing.assert_close(again[0], first[0][0])
    torch.testing.assert_close(again[1], first[0][1])

    uncached = ExtractionDataset(train_items, FilterbankCodec(), LogMelEmbedder(), cache_size=0)
    uncached.latents(0)
    assert not uncached._latents


def test_mixed_condition_is_reproducible(toy_dataset):
    embedder = LogMelEmbedder()
    items = toy_dataset.select("train")
    clips = [np.sin(np.arange(24000) * (0.02 + 0.01 * i)) for i in range(len(items.labels()))]
    embedder.fit(clips, items.labels())
    a = ExtractionDataset(items, FilterbankCodec(), embedder, condition="mixed", seed=3)
    b = ExtractionDataset(items, FilterbankCodec(), embedder, condition="mixed", seed=3)
    modalities = [a.reference(i)[1] for i in range(len(a))]
    assert modalities == [b.reference(i)[1] for i in range(len(b))]
    assert set(modalities) <= {"audio", "text"}


def run_training(toy_dataset, config, schedule, out, epochs, resume_from=None):
    cfg = TrainConfig(lr=1e-3, batch_size=8, epochs=epochs, seed=5)
    return train(
        cfg, toy_dataset, FilterbankCodec(), LogMelEmbedder(), config, schedule, out,
        resume_from=resume_from, progress=False,
    )


def test_training_writes_checkpoints_and_log(toy_dataset, codec_config, short_schedule, tmp_path):
    result = run_training(toy_dataset, codec_config, short_schedule, tmp_path, epochs=2)
    assert result.best_path == tmp_path / BEST_CHECKPOINT
    assert (tmp_path / LAST_CHECKPOINT).exists()
    assert [h["epoch"] for h in result.history] == [1, 2]
    assert all(h["valid_loss"] is not None for h in result.history)

    log = TrainingLog(tmp_path / TRAINING_LOG)
    steps_per_epoch = math.ceil(len(toy_dataset.select("train")) / 8)
    assert len(log.records("step")) == 2 * steps_per_epoch
    assert [r["epoch"] for r in log.records("epoch")] == [1, 2]

    checkpoint = load_checkpoint(result.last_path)
    plugins = checkpoint.metadata["plugins"]
    assert plugins["codec"]["name"] == "filterbank"
    assert plugins["embedder"]["name"] == "logmel"
    assert checkpoint.train_state["epoch"] == 2
    assert checkpoint.schedule.rescaled


def test_resume_matches_uninterrupted_run(toy_dataset, codec_config, short_schedule, tmp_path):
    straight = run_training(toy_dataset, codec_config, short_schedule, tmp_path / "straight", epochs=2)
    first = run_training(toy_dataset, codec_config, short_schedule, tmp_path / "split", epochs=1)
    resumed = run_training(
        toy_dataset, codec_config, short_schedule, tmp_path / "split", epochs=2, resume_from=first.last_path
    )
    a = load_checkpoint(straight.last_path).params
    b = load_checkpoint(resumed.last_path).params
    for name in a:
        torch.testing.assert_close(a[name], b[name], rtol=1e-5, atol=1e-6)
    assert [h["train_loss"] for h in resumed.history] == pytest.approx([h["train_loss"] for h in straight.history])


def test_finetune_registers_new_text_class(toy_dataset, codec_config, short_schedule, tmp_path):
    base = run_training(toy_dataset, codec_config, short_schedule, tmp_path / "base", epochs=1)
    shots = toy_dataset.select("holdout").take_per_class(2)
    plugins = load_checkpoint(base.best_path).metadata["plugins"]
    embedder = LogMelEmbedder.load(plugins["embedder"]["asset"])
    assert "pulse_beeps" not in embedder.centroids

    result = finetune(
        base.best_path, shots, FilterbankCodec.load(plugins["codec"]["asset"]), embedder, tmp_path / "ft",
        cfg_overrides={"epochs": 1, "batch_size": 2},
        base_cfg=TrainConfig(condition="text"), progress=False,
    )
    checkpoint = load_checkpoint(result.best_path)
    assert checkpoint.metadata["few_shot_classes"] == ["pulse_beeps"]
    assert checkpoint.train_state["config"]["lr"] == 1e-5
    stored = LogMelEmbedder.load(checkpoint.metadata["plugins"]["embedder"]["asset"])
    assert "pulse_beeps" in stored.centroids


def test_class_support_requires_capability(toy_dataset):
    shots = toy_dataset.select("holdout").take_per_class(1)

    class Frozen(EmbedderPlugin):
        name = "frozen"
        can_embed_audio = True
        can_embed_text = True

        def embed_text(self, text):
            raise UnknownLabelError(text)

    with pytest.raises(UnknownLabelError):
        ensure_class_support(shots, Frozen(), "text")
    with pytest.raises(CapabilityError):
        ensure_class_support(shots, EmbedderPlugin(), "audio")
    assert ensure_class_support(shots, Frozen(), "audio") == []
