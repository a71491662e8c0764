import json
import os

import numpy as np
import pytest

from shiftgen.cli import main

TRAIN_FLAGS = ["--epochs", "1", "--val-jsd-pairs", "2", "--batch-size", "16",
               "--d-model", "32", "--heads", "2",
               "--encoder-layers", "1", "--decoder-layers", "1"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--n", "60", "--preset", "shift_only", "--seed", "7",
                 "--out", str(root / "synth"), "--quiet"]) == 0
    assert main(["train", "--corpus", str(root / "synth" / "corpus.jsonl"),
                 "--out", str(root / "train"), "--quiet", *TRAIN_FLAGS]) == 0
    return root


def test_synth_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--n", "40", "--preset", "population", "--seed", "5",
                     "--out", str(tmp_path / name), "--quiet"]) == 0
    assert ((tmp_path / "a" / "corpus.jsonl").read_bytes()
            == (tmp_path / "b" / "corpus.jsonl").read_bytes())


def test_synth_writes_calibration(workdir):
    blob = json.loads((workdir / "synth" / "calibration.json").read_text())
    assert "work_start" in blob and "home_start" in blob


def test_resolved_config_logged(workdir):
    blob = json.loads((workdir / "synth" / "resolved_config.json").read_text())
    assert blob["subcommand"] == "synth"
    assert blob["n"] == 60 and blob["seed"] == 7


def test_train_outputs(workdir):
    assert (workdir / "train" / "checkpoint.bin").exists()
    log = (workdir / "train" / "train_log.jsonl").read_text().splitlines()
    assert len(log) == 1
    assert json.loads(log[0])["epoch"] == 1


def test_generate_subcommand(workdir, tmp_path):
    rc = main(["generate", "--checkpoint", str(workdir / "train" / "checkpoint.bin"),
               "--corpus", str(workdir / "synth" / "corpus.jsonl"),
               "--split", "test", "--out", str(tmp_path), "--quiet"])
    assert rc == 0
    from shiftgen.core import load_corpus
    gen = load_corpus(tmp_path / "generated.jsonl")
    assert len(gen) > 0
    for p in gen.pairs:
        assert (p.mask2 == 1).all()
        assert p.day2.min() >= 1


def test_eval_subcommand(workdir, tmp_path):
    rc = main(["eval", "--checkpoint", str(workdir / "train" / "checkpoint.bin"),
               "--corpus", str(workdir / "synth" / "corpus.jsonl"),
               "--split", "test", "--out", str(tmp_path), "--quiet"])
    assert rc == 0
    blob = json.loads((tmp_path / "eval_report.json").read_text())
    assert 0.0 <= blob["average_jsd"] <= 1.0
    assert (tmp_path / "eval_duration.csv").exists()


def test_gradcheck_subcommand(tmp_path, capsys):
    assert main(["gradcheck", "--out", str(tmp_path), "--quiet"]) == 0
    out = capsys.readouterr().out
    assert "max relative error" in out
    blob = json.loads((tmp_path / "gradcheck.json").read_text())
    assert blob["max_relative_error"] < 1e-4


def test_eval_without_checkpoint_errors(workdir, tmp_path, capsys):
    rc = main(["eval", "--corpus", str(workdir / "synth" / "corpus.jsonl"),
               "--out", str(tmp_path)])
    assert rc == 1
    err = capsys.readouterr().err
    assert err.startswith("error:") and "\n" not in err.strip()


def test_missing_corpus_errors(tmp_path, capsys):
    rc = main(["train", "--corpus", str(tmp_path / "nope.jsonl"),
               "--out", str(tmp_path), *TRAIN_FLAGS])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 25, "preset": "population", "seed": 3}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "a"),
                 "--quiet"]) == 0
    resolved = json.loads((tmp_path / "a" / "resolved_config.json").read_text())
    assert resolved["n"] == 25 and resolved["preset"] == "population"
    # explicit flag wins over the file value
    assert main(["synth", "--config", str(cfg), "--n", "10",
                 "--out", str(tmp_path / "b"), "--quiet"]) == 0
    resolved = json.loads((tmp_path / "b" / "resolved_config.json").read_text())
    assert resolved["n"] == 10


def test_config_env_var(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 15, "preset": "shift_only"}))
    monkeypatch.setenv("SHIFTGEN_CONFIG", str(cfg))
    assert main(["synth", "--out", str(tmp_path / "run"), "--quiet"]) == 0
    resolved = json.loads((tmp_path / "run" / "resolved_config.json").read_text())
    assert resolved["n"] == 15 and resolved["preset"] == "shift_only"


def test_bad_config_file_errors(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{broken")
    rc = main(["synth", "--config", str(cfg), "--out", str(tmp_path / "x")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_pipeline_reproducible(tmp_path):
    """synth -> train -> eval twice with the same seeds: identical artifacts."""
    outputs = []
    for name in ("r1", "r2"):
        base = tmp_path / name
        main(["synth", "--n", "40", "--preset", "shift_only", "--seed", "13",
              "--out", str(base / "s"), "--quiet"])
        main(["train", "--corpus", str(base / "s" / "corpus.jsonl"),
              "--out", str(base / "t"), "--quiet", *TRAIN_FLAGS])
        main(["eval", "--checkpoint", str(base / "t" / "checkpoint.bin"),
              "--corpus", str(base / "s" / "corpus.jsonl"),
              "--out", str(base / "e"), "--quiet"])
        outputs.append((
            (base / "s" / "corpus.jsonl").read_bytes(),
            (base / "t" / "train_log.jsonl").read_bytes(),
            (base / "e" / "eval_report.json").read_bytes(),
        ))
    assert outputs[0] == outputs[1]
