from pathlib import Path

import pytest

from Engine.errors import ConfigurationError, ParameterError
from Settings.config import ExperimentConfig, apply_overrides, load_config, preset
from Settings.plugins import resolve_object

TOY_YAML = Path(__file__).resolve().parents[1] / "configs" / "toy.yaml"


def test_base_defaults():
    cfg = load_config()
    assert (cfg.model.depth, cfg.model.width, cfg.model.heads) == (12, 768, 12)
    assert cfg.diffusion.T == 1000 and cfg.diffusion.rescale
    assert cfg.sampler.steps == 50 and cfg.sampler.guidance_scale == 2.5
    assert cfg.train.batch_size == 128 and cfg.train.lr == 1e-4
    schedule = cfg.diffusion.build()
    assert schedule.rescaled and schedule.alpha_bar[-1] == 0.0


def test_toy_file():
    cfg = load_config(TOY_YAML)
    assert (cfg.model.depth, cfg.model.width, cfg.model.heads) == (4, 192, 4)
    assert cfg.diffusion.T == 200
    assert cfg.sampler.steps == 25
    assert cfg.data.duration == 2.0
    assert cfg.train.lr == 2e-4
    assert cfg.ingest.holdout_classes == ["pulse_beeps"]


def test_presets_differ_only_where_named():
    toy = preset("toy")
    assert toy.model.depth == 4
    assert toy.data.snr_range == preset("base").data.snr_range
    with pytest.raises(ConfigurationError):
        preset("huge")


def test_overrides_are_yaml_scalars():
    cfg = apply_overrides(
        ExperimentConfig(),
        ["train.lr=3e-4", "model.use_skip=false", "data.snr_range=[-5, 5]", "ingest.holdout_classes=[a, b]", "device=cpu"],
    )
    assert cfg.train.lr == pytest.approx(3e-4)
    assert cfg.model.use_skip is False
    assert cfg.data.snr_range == (-5.0, 5.0)
    assert cfg.ingest.holdout_classes == ["a", "b"]
    assert cfg.resolved_device() == "cpu"


@pytest.mark.parametrize(
    "override",
    ["train.nope=1", "nope=1", "model=3", "train.batch_size=abc", "train.batch_size=2.5", "model.use_skip=maybe", "broken"],
)
def test_bad_overrides(override):
    with pytest.raises(ConfigurationError):
        apply_overrides(ExperimentConfig(), [override])


def test_unknown_file_key(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("train:\n  learning_rate: 0.1\n")
    with pytest.raises(ConfigurationError, match="train.learning_rate"):
        load_config(path)
    path.write_text("- just\n- a list\n")
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_precedence_file_then_overrides_then_seed(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("seed: 1\ntrain:\n  lr: 1.0e-3\n  epochs: 7\n")
    cfg = load_config(path, ["train.lr=5e-4", "seed=2"], seed=9)
    assert cfg.train.lr == pytest.approx(5e-4)
    assert cfg.train.epochs == 7
    assert (cfg.seed, cfg.train.seed, cfg.sampler.seed) == (9, 9, 9)

    cfg = load_config(path, ["seed=2"])
    assert (cfg.seed, cfg.train.seed, cfg.sampler.seed) == (2, 2, 2)
    cfg = load_config(path)
    assert (cfg.seed, cfg.train.seed, cfg.sampler.seed) == (1, 1, 1)


def test_validation_runs_after_loading(tmp_path):
    with pytest.raises(ParameterError):
        load_config(overrides=["sampler.steps=2000"])
    with pytest.raises(ConfigurationError):
        load_config(overrides=["model.heads=5"])
    with pytest.raises(ConfigurationError):
        load_config(overrides=["data.sample_rate=16000"])


def test_resolved_config_reloads_identically(tmp_path):
    cfg = load_config(TOY_YAML, ["train.epochs=3"], seed=4)
    path = tmp_path / "run.yaml"
    path.write_text(cfg.to_yaml())
    assert load_config(path).to_dict() == cfg.to_dict()


def test_resolve_object():
    assert resolve_object("Settings.config:preset") is preset
    for bad in ("Settings.config", "Settings.config:missing", "no.such.module:thing"):
        with pytest.raises(ConfigurationError):
            resolve_object(bad)
