from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
import torch

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from Engine.schedule import build_schedule, rescale_terminal, schedule_from_betas  # noqa: E402
from Model.backbone import BackboneConfig  # noqa: E402
from Synthesis.corpus import IngestConfig, ingest_corpus  # noqa: E402
from Synthesis.dataset import SynthConfig, build_dataset  # noqa: E402
from Synthesis.toy import ToyCorpusConfig, generate_toy_corpus  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def t4_schedule():
    return schedule_from_betas([0.1, 0.2, 0.3, 0.4])


@pytest.fixture
def rescaled_schedule():
    return rescale_terminal(build_schedule(1000, 0.00085, 0.012))


@pytest.fixture
def tiny_config() -> BackboneConfig:
    return BackboneConfig(depth=2, width=32, heads=2, latent_channels=8, ref_dim=512, freq_dim=16)


@pytest.fixture(scope="session")
def toy_corpus_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("toy_audio")
    generate_toy_corpus(out, ToyCorpusConfig(clips_per_class=5, background_clips=2, duration=1.0), seed=3)
    return out


@pytest.fixture(scope="session")
def toy_corpus(toy_corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("toy_corpus")
    cfg = IngestConfig(valid_fraction=0.2, test_fraction=0.2, holdout_classes=["pulse_beeps"])
    return ingest_corpus(toy_corpus_dir, out, cfg=cfg)


@pytest.fixture(scope="session")
def toy_dataset(toy_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("toy_dataset")
    cfg = SynthConfig(duration=1.0, mixtures_per_file=1, eval_mixtures_per_file=1)
    return build_dataset(cfg, toy_corpus, 0, out, progress=False)


@pytest.fixture
def codec_config() -> BackboneConfig:
    return BackboneConfig(depth=2, width=32, heads=2, latent_channels=128, ref_dim=512, freq_dim=16)


@pytest.fixture
def short_schedule():
    return rescale_terminal(build_schedule(50, 0.00085, 0.012))


@pytest.fixture
def float64():
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)
