"""Toy pipeline through the CLI: a reduced smoke run, then the full configs/toy.yaml trend check."""

from pathlib import Path

import pytest

import tsextract
from Evaluation.report import read_report
from Model.checkpoint import load_checkpoint

pytestmark = pytest.mark.slow

TOY_YAML = str(Path(__file__).resolve().parents[1] / "configs" / "toy.yaml")


def test_toy_pipeline(tmp_path):
    common = [
        "--config", TOY_YAML, "--seed", "1", "--set", "device=cpu", "--log-level", "WARNING",
        "--set", "toy.clips_per_class=8", "--set", "toy.background_clips=3", "--set", "toy.duration=1.0",
        "--set", "data.duration=1.0", "--set", "data.mixtures_per_file=2", "--set", "data.eval_mixtures_per_file=1",
        "--set", "ingest.test_fraction=0.25", "--set", "ingest.valid_fraction=0.125",
        "--set", "model.depth=2", "--set", "model.width=64", "--set", "model.heads=2",
        "--set", "diffusion.T=50", "--set", "sampler.steps=5",
        "--set", "train.epochs=2", "--set", "train.batch_size=16",
        "--set", "finetune.epochs=1", "--set", "finetune.batch_size=4",
    ]
    audio, data, run, ft = (tmp_path / name for name in ("audio", "data", "run", "ft"))

    assert tsextract.main(["toy-corpus", "--out", str(audio), *common]) == 0
    assert tsextract.main(["synth-data", "--corpus", str(audio), "--out", str(data), *common]) == 0
    assert tsextract.main(["train", "--data", str(data), "--out", str(run), *common]) == 0
    assert (run / "classifier.pt").exists()

    for mode in ("model", "mixture"):
        args = ["evaluate", "--data", str(data), "--mode", mode, "--out", str(tmp_path / f"{mode}.jsonl")]
        if mode == "model":
            args += ["--checkpoint", str(run / "best.pt")]
        assert tsextract.main([*args, *common]) == 0
    model = read_report(tmp_path / "model.jsonl").aggregates()
    mixture = read_report(tmp_path / "mixture.jsonl").aggregates()
    assert model["n_items"] == mixture["n_items"] > 0
    assert model["fd"] is not None and model["mean_kl"] is not None

    assert tsextract.main(
        ["finetune", "--checkpoint", str(run / "best.pt"), "--data", str(data), "--shots", "1", "--out", str(ft), *common]
    ) == 0
    assert load_checkpoint(ft / "best.pt").metadata["few_shot_classes"] == ["pulse_beeps"]
    assert tsextract.main(
        [
            "evaluate", "--data", str(data), "--checkpoint", str(ft / "best.pt"), "--split", "holdout",
            "--skip-shots", "1", "--modality", "text", "--out", str(tmp_path / "holdout.jsonl"), *common,
        ]
    ) == 0
    assert read_report(tmp_path / "holdout.jsonl").metadata["guidance_scale"] == 3.0


def _cosines(path):
    return {record.id: record.cosine_audio for record in read_report(path).items}


def _mean(scores):
    return sum(scores.values()) / len(scores)


def test_toy_trends(tmp_path):
    """Full configs/toy.yaml run: the model beats the mixture, skips help, and shots help the held-out class."""
    common = ["--config", TOY_YAML, "--seed", "0", "--set", "device=cpu", "--log-level", "WARNING"]
    audio, data = tmp_path / "audio", tmp_path / "data"
    assert tsextract.main(["toy-corpus", "--out", str(audio), *common]) == 0
    assert tsextract.main(["synth-data", "--corpus", str(audio), "--out", str(data), *common]) == 0

    def evaluate(name, *extra):
        out = tmp_path / f"{name}.jsonl"
        assert tsextract.main(["evaluate", "--data", str(data), "--out", str(out), *extra, *common]) == 0
        return out

    for run, flags in (("run", []), ("noskip", ["--set", "model.use_skip=false"])):
        assert tsextract.main(["train", "--data", str(data), "--out", str(tmp_path / run), *common, *flags]) == 0

    model = _cosines(evaluate("model", "--checkpoint", str(tmp_path / "run" / "best.pt")))
    mixture = _cosines(evaluate("mixture", "--mode", "mixture"))
    noskip = _cosines(evaluate("noskip", "--checkpoint", str(tmp_path / "noskip" / "best.pt")))
    assert model.keys() == mixture.keys() == noskip.keys()
    assert _mean(model) - _mean(mixture) >= 0.10
    assert sum(model[k] > mixture[k] for k in model) >= 0.7 * len(model)
    assert _mean(noskip) < _mean(model)

    holdout = ["--split", "holdout", "--skip-shots", "10"]
    shots = {0: _mean(_cosines(evaluate("shot0", "--checkpoint", str(tmp_path / "run" / "best.pt"), *holdout)))}
    for k in (1, 10):
        ft = tmp_path / f"ft{k}"
        assert tsextract.main(
            ["finetune", "--checkpoint", str(tmp_path / "run" / "best.pt"), "--data", str(data),
             "--shots", str(k), "--out", str(ft), *common]
        ) == 0
        shots[k] = _mean(_cosines(evaluate(f"shot{k}", "--checkpoint", str(ft / "best.pt"), *holdout)))
    assert shots[0] < shots[1] <= shots[10]
