"""CLI smoke tests through the in-process service."""

import json

import pytest

from pruneforge.cli import main


def run_cli(capsys, *argv):
    main(list(argv))
    return capsys.readouterr().out


def test_synth_writes_dataset(tmp_path, capsys):
    out = run_cli(capsys, "synth", "--out", str(tmp_path / "d"), "--classes", "2",
                  "--per-class", "3", "--seed", "1")
    assert "wrote 6 samples" in out
    assert (tmp_path / "d" / "manifest.json").exists()
    assert (tmp_path / "d" / "samples" / "00000.tnsr").exists()


def test_flops_table(capsys):
    out = run_cli(capsys, "flops", "--preset", "vgg16", "--resolution", "3x200x200",
                  "--classes", "9", "--prune-fraction", "0.5")
    assert "GFLOPs reduction 74.60%" in out
    assert "kernel reduction 50.00%" in out


def test_flops_json(capsys):
    out = run_cli(capsys, "flops", "--preset", "tinyvgg", "--resolution", "1x16x16",
                  "--classes", "3", "--json")
    doc = json.loads(out)
    assert doc["kernel_counts"] == [8, 8, 16, 16]


def test_train_score_eval_auto_pipeline(tmp_path, capsys):
    data = str(tmp_path / "data")
    run_cli(capsys, "synth", "--out", data, "--classes", "3", "--per-class", "16", "--seed", "2")
    manifest = f"{data}/manifest.json"
    ckpt = str(tmp_path / "base.cnnp")
    sessions = str(tmp_path / "sessions")

    out = run_cli(capsys, "train", "--dataset", manifest, "--split-count", "1",
                  "--out", ckpt, "--epochs", "3", "--lr", "0.05",
                  "--sessions-root", sessions)
    assert "test_accuracy" in out

    out = run_cli(capsys, "score", "--dataset", manifest, "--split-count", "1",
                  "--checkpoint", ckpt, "--layer", "1", "--criterion", "l1_norm",
                  "--sessions-root", sessions)
    assert "kernel    0" in out

    out = run_cli(capsys, "eval", "--dataset", manifest, "--split-count", "1",
                  "--checkpoint", ckpt, "--sessions-root", sessions)
    assert "accuracy" in out

    out = run_cli(capsys, "auto", "--dataset", manifest, "--split-count", "1",
                  "--checkpoint", ckpt, "--method", "oPPR", "--rho", "0.5",
                  "--progressive-epochs", "1", "--final-epochs", "1",
                  "--seed", "1", "--sessions-root", sessions)
    assert "removed 4 kernels" in out
    assert "kernel_reduction_pct" in out


def test_bad_server_error_is_clean(tmp_path, capsys):
    with pytest.raises(SystemExit):
        main(["eval", "--dataset", "missing.json", "--checkpoint", "missing.cnnp",
              "--sessions-root", str(tmp_path / "s")])
