import csv
import hashlib
import json
import os

import numpy as np
import pytest

from bundle import load_bundle, save_bundle
from conditioning import load_corpus, read_tensor
from main import main
from tests.helpers import SMALL_OVERRIDES


def _write_config(path, **extra):
    values = dict(SMALL_OVERRIDES, **extra)
    path.write_text("".join(f"{key} = {json.dumps(value)}\n" for key, value in values.items()), encoding="utf-8")
    return str(path)


def _digest(path):
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def _read_mel(path):
    with open(path + ".json", encoding="utf-8") as f:
        info = json.load(f)
    return read_tensor(path, (info["frames"], info["bins"])), info


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = _write_config(root / "small.conf")
    logs = str(root / "logs")
    dataset = str(root / "dataset")
    train_dir = str(root / "train")
    assert main(["--config", config, "--log-dir", logs, "data-gen", "--output-dir", dataset]) == 0
    assert main(["--config", config, "--log-dir", logs, "train", "--dataset", dataset, "--output-dir", train_dir]) == 0
    return {
        "root": root, "config": config, "logs": logs, "dataset": dataset,
        "checkpoint": os.path.join(train_dir, "model.nfvc"), "train_dir": train_dir,
    }


def _run(workspace, *args, config=None):
    return main(["--config", config or workspace["config"], "--log-dir", workspace["logs"], *args])


def test_data_gen_is_reproducible(workspace):
    other = str(workspace["root"] / "dataset_again")
    assert _run(workspace, "data-gen", "--output-dir", other) == 0
    assert _digest(os.path.join(other, "manifest.json")) == _digest(os.path.join(workspace["dataset"], "manifest.json"))
    assert os.path.exists(os.path.join(other, "config_echo.txt"))


def test_data_gen_default_size_and_echo(tmp_path):
    config = tmp_path / "empty.conf"
    config.write_text("# defaults\n", encoding="utf-8")
    out = str(tmp_path / "dataset")
    assert main(["--config", str(config), "--log-dir", str(tmp_path / "logs"), "data-gen", "--output-dir", out]) == 0
    assert len(load_corpus(out).utterances) == 200
    echo = open(os.path.join(out, "config_echo.txt"), encoding="utf-8").read()
    assert "n_utterances = 200" in echo


def test_invalid_config_key_rejected(tmp_path, caplog):
    config = tmp_path / "bad.conf"
    config.write_text("n_speakerz = 3\n", encoding="utf-8")
    code = main(["--config", str(config), "--log-dir", str(tmp_path / "logs"), "data-gen",
                 "--output-dir", str(tmp_path / "out")])
    assert code == 2
    assert "n_speakerz" in caplog.text


def test_train_outputs(workspace):
    rows = _read_csv(os.path.join(workspace["train_dir"], "training_nll.csv"))
    assert [int(r["epoch"]) for r in rows] == [1, 2]
    bundle = load_bundle(workspace["checkpoint"])
    assert bundle.speaker_generator is not None
    assert bundle.training["epochs"] == 2
    assert bundle.optimizer.step_count == int(rows[0]["steps"]) + int(rows[1]["steps"])


def test_zero_epochs_saves_initialized_model(workspace, tmp_path):
    config = _write_config(tmp_path / "zero.conf", epochs=0)
    out = str(tmp_path / "train0")
    assert _run(workspace, "train", "--dataset", workspace["dataset"], "--output-dir", out, config=config) == 0
    bundle = load_bundle(os.path.join(out, "model.nfvc"))
    assert bundle.optimizer.step_count == 0
    assert bundle.model.actnorm_initialized
    assert _read_csv(os.path.join(out, "training_nll.csv")) == []


def test_resume_continues_step_counter(workspace, tmp_path):
    before = load_bundle(workspace["checkpoint"]).optimizer.step_count
    out = str(tmp_path / "resumed")
    assert _run(workspace, "train", "--dataset", workspace["dataset"], "--output-dir", out,
                "--resume", workspace["checkpoint"]) == 0
    assert load_bundle(os.path.join(out, "model.nfvc")).optimizer.step_count == 2 * before


def test_vc_to_own_speaker_returns_input(workspace, tmp_path):
    corpus = load_corpus(workspace["dataset"])
    utt = corpus.split("train")[0]
    out = str(tmp_path / "vc.f32")
    assert _run(workspace, "vc", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["dataset"],
                "--utterance", utt.utt_id, "--speaker", utt.speaker, "--output", out) == 0
    mel, info = _read_mel(out)
    assert info["profile"] == "Flow-VC"
    np.testing.assert_allclose(mel, utt.mel, atol=1e-5)


def test_vc_to_other_speaker_changes_output(workspace, tmp_path):
    corpus = load_corpus(workspace["dataset"])
    utt = corpus.split("train")[0]
    target = next(s for s in corpus.speaker_ids() if s != utt.speaker)
    out = str(tmp_path / "vc.f32")
    assert _run(workspace, "vc", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["dataset"],
                "--utterance", utt.utt_id, "--speaker", target, "--output", out) == 0
    mel, info = _read_mel(out)
    assert info["target"] == target
    assert mel.shape == utt.mel.shape and not np.allclose(mel, utt.mel)


def test_tts_seed_reproducible(workspace, tmp_path):
    outputs = []
    for name in ("a", "b"):
        out = str(tmp_path / f"{name}.f32")
        assert _run(workspace, "tts", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["dataset"],
                    "--utterance", "utt00000", "--seed", "7", "--profile", "Flow-TTS", "--output", out) == 0
        outputs.append(out)
    assert _digest(outputs[0]) == _digest(outputs[1])
    _, info = _read_mel(outputs[0])
    assert info["profile"] == "Flow-TTS" and info["seed"] == 7


def test_unknown_profile_rejected(workspace, tmp_path):
    code = _run(workspace, "tts", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["dataset"],
                "--utterance", "utt00000", "--profile", "Flow-GAN", "--output", str(tmp_path / "x.f32"))
    assert code == 2


def test_gen_speakers(workspace, tmp_path):
    empty = str(tmp_path / "empty.json")
    assert _run(workspace, "gen-speakers", "--checkpoint", workspace["checkpoint"], "--locale", "en-US",
                "--count", "0", "--output", empty) == 0
    assert json.load(open(empty, encoding="utf-8")) == []

    paths = []
    for name in ("a", "b"):
        path = str(tmp_path / f"{name}.json")
        assert _run(workspace, "gen-speakers", "--checkpoint", workspace["checkpoint"], "--locale", "en-US",
                    "--count", "5", "--seed", "3", "--output", path) == 0
        paths.append(path)
    assert _digest(paths[0]) == _digest(paths[1])
    records = json.load(open(paths[0], encoding="utf-8"))
    assert len(records) == 5 and records[0]["locale"] == "en-US"
    assert len(records[0]["embedding"]) == SMALL_OVERRIDES["speaker_embedding_dim"]


def test_gen_speakers_unknown_locale(workspace, tmp_path):
    code = _run(workspace, "gen-speakers", "--checkpoint", workspace["checkpoint"], "--locale", "xx-XX",
                "--output", str(tmp_path / "x.json"))
    assert code == 3


def test_eval_pca_writes_svg_and_coordinates(workspace, tmp_path):
    out = str(tmp_path / "eval")
    assert _run(workspace, "eval", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["dataset"],
                "--metric", "pca", "--output-dir", out) == 0
    assert open(os.path.join(out, "pca_scatter.svg"), encoding="utf-8").read().count("<svg") == 1
    rows = _read_csv(os.path.join(out, "pca_report.csv"))
    assert {r["group"] for r in rows} == {"train", "new"}
    assert len(rows) == SMALL_OVERRIDES["n_speakers"] + SMALL_OVERRIDES["new_voice_count"]
    assert os.path.exists(os.path.join(out, "pca_summary.csv"))


def test_eval_secs_on_identical_embeddings(workspace, tmp_path):
    dim = SMALL_OVERRIDES["speaker_embedding_dim"]
    path = tmp_path / "same.json"
    path.write_text(json.dumps([{"id": f"v{i}", "embedding": [0.5] * dim} for i in range(3)]), encoding="utf-8")
    out = str(tmp_path / "eval")
    assert _run(workspace, "eval", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["dataset"],
                "--metric", "secs", "--embeddings", str(path), "--target-index", "0", "--output-dir", out) == 0
    rows = _read_csv(os.path.join(out, "secs_report.csv"))
    assert [r["secs"] for r in rows[:3]] == ["1.000000"] * 3
    assert rows[-2]["id"] == "mean" and rows[-2]["secs"] == "1.000000"


def test_eval_secs_converts_held_out_utterances(workspace, tmp_path):
    out = str(tmp_path / "eval")
    assert _run(workspace, "eval", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["dataset"],
                "--metric", "secs", "--output-dir", out) == 0
    rows = _read_csv(os.path.join(out, "secs_report.csv"))
    held_out = len(load_corpus(workspace["dataset"]).split("test"))
    assert len(rows) == held_out + 2
    assert all(r["source"] != r["target"] for r in rows[:held_out])


@pytest.mark.parametrize("metric", ["variance", "nn"])
def test_eval_new_voice_metrics(workspace, tmp_path, metric):
    out = str(tmp_path / metric)
    assert _run(workspace, "eval", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["dataset"],
                "--metric", metric, "--output-dir", out) == 0
    rows = _read_csv(os.path.join(out, f"{metric}_report.csv"))
    assert rows
    assert os.path.exists(os.path.join(out, "config_echo.txt"))


def test_eval_nn_on_rendered_voices(workspace, tmp_path):
    out = str(tmp_path / "rendered")
    assert _run(workspace, "eval", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["dataset"],
                "--metric", "nn", "--render", "vc", "--output-dir", out) == 0
    rows = _read_csv(os.path.join(out, "nn_report.csv"))
    assert len(rows) == SMALL_OVERRIDES["new_voice_count"] + 1
    assert rows[-1]["voice"] == "fraction_further"


def test_eval_secs_single_speaker_checkpoint(workspace, tmp_path):
    corpus = load_corpus(workspace["dataset"])
    speaker = corpus.split("test")[0].speaker
    bundle = load_bundle(workspace["checkpoint"])
    bundle.speaker_ids = [speaker]
    bundle.speaker_locales = {speaker: bundle.speaker_locales[speaker]}
    bundle.builder.set_speaker_table({speaker: bundle.builder.speaker_table[speaker]})
    single = save_bundle(str(tmp_path / "single.nfvc"), bundle)
    code = _run(workspace, "eval", "--checkpoint", single, "--dataset", workspace["dataset"],
                "--metric", "secs", "--output-dir", str(tmp_path / "eval"))
    assert code == 3


def test_synthesis_outputs_carry_config_echo(workspace, tmp_path):
    vc_dir, tts_dir, voices_dir = tmp_path / "vc", tmp_path / "tts", tmp_path / "voices"
    assert _run(workspace, "vc", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["dataset"],
                "--utterance", "utt00000", "--speaker", "spk001", "--output", str(vc_dir / "out.f32")) == 0
    assert _run(workspace, "tts", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["dataset"],
                "--utterance", "utt00000", "--output", str(tts_dir / "out.f32")) == 0
    assert _run(workspace, "gen-speakers", "--checkpoint", workspace["checkpoint"], "--locale", "en-US",
                "--count", "2", "--output", str(voices_dir / "voices.json")) == 0
    for directory in (vc_dir, tts_dir, voices_dir):
        echo = (directory / "config_echo.txt").read_text(encoding="utf-8")
        assert f"n_speakers = {SMALL_OVERRIDES['n_speakers']}" in echo


def test_unknown_metric_rejected(workspace, tmp_path):
    code = _run(workspace, "eval", "--checkpoint", workspace["checkpoint"], "--dataset", workspace["dataset"],
                "--metric", "mos", "--output-dir", str(tmp_path / "eval"))
    assert code == 2


def test_corrupted_checkpoint_rejected(workspace, tmp_path):
    broken = tmp_path / "broken.nfvc"
    payload = bytearray(open(workspace["checkpoint"], "rb").read())
    payload[:4] = b"JUNK"
    broken.write_bytes(bytes(payload))
    code = _run(workspace, "gen-speakers", "--checkpoint", str(broken), "--locale", "en-US",
                "--output", str(tmp_path / "x.json"))
    assert code == 3
