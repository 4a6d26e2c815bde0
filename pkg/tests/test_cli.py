"""Command-line workflow: every subcommand, config files, and exit codes."""

import numpy as np
import pytest

from gait3d import cli
from gait3d.dataset import Manifest

TRAIN_FLAGS = [
    "--clip-len", "12",
    "--out-h", "32",
    "--out-w", "32",
    "--epochs", "20",
    "--batch-size", "4",
    "--seed", "11",
    "--threads", "1",
]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_ds")
    code = cli.main(
        ["synth", "--subjects", "2", "--sequences", "4", "--seed", "11",
         "--frames", "14", "--out", str(root)]
    )
    assert code == 0
    return root


# -- parser and error paths ---------------------------------------------------


def test_usage_errors_exit_2(dataset):
    for argv in ([], ["walk"], ["synth"]):
        with pytest.raises(SystemExit) as err:
            cli.main(argv)
        assert err.value.code == 2


def test_runtime_errors_exit_1(tmp_path, capsys):
    code = cli.main(["train", "--manifest", str(tmp_path / "nope.tsv"),
                     "--out", str(tmp_path / "run")])
    assert code == 1
    assert capsys.readouterr().err.startswith("error:")


def test_config_unknown_key_exits_1(dataset, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("window_size = 3\n", encoding="utf-8")
    code = cli.main(["train", "--manifest", str(dataset / "manifest.tsv"),
                     "--out", str(tmp_path / "run"), "--config", str(cfg)])
    assert code == 1
    err = capsys.readouterr().err
    assert "error:" in err and "window_size" in err


# -- synth --------------------------------------------------------------------


def test_synth_dataset_layout(dataset, capsys):
    manifest = Manifest.load(dataset / "manifest.tsv")
    manifest.validate()
    assert len(manifest.records) == 8
    assert manifest.subjects() == [1, 2]


# -- preprocess / stages ------------------------------------------------------


def test_preprocess_writes_silhouettes_and_skeletons(dataset, tmp_path, capsys):
    out = tmp_path / "prep"
    code = cli.main(["preprocess", "--manifest", str(dataset / "manifest.tsv"),
                     "--out", str(out), "--threads", "1"])
    assert code == 0
    assert (out / "config.resolved").is_file()
    manifest = Manifest.load(dataset / "manifest.tsv")
    for rec in manifest.records:
        sils = sorted((out / rec.sequence_dir).glob("*_sil.pgm"))
        skels = sorted((out / rec.sequence_dir).glob("*_skel.pgm"))
        assert len(sils) == 14  # frame 0 is the background model
        assert len(skels) == 14
    assert "wrote silhouettes and skeletons" in capsys.readouterr().out


def test_stages_writes_every_stage(dataset, tmp_path, capsys):
    seq = dataset / "001" / "NM-01" / "090"
    out = tmp_path / "stages"
    code = cli.main(["stages", "--sequence", str(seq), "--out", str(out)])
    assert code == 0
    for suffix in ("gray", "mask", "denoised", "sil", "skel"):
        assert len(list(out.glob(f"*_{suffix}.pgm"))) == 14
    assert "5 stage images" in capsys.readouterr().out


# -- train / eval / predict ---------------------------------------------------


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_run")
    code = cli.main(["train", "--manifest", str(dataset / "manifest.tsv"),
                     "--out", str(out), *TRAIN_FLAGS])
    assert code == 0
    return out


def test_train_outputs(trained, capsys):
    assert (trained / "model.g3dc").is_file()
    metrics = (trained / "metrics.csv").read_text(encoding="utf-8").splitlines()
    assert metrics[0] == "epoch,train_loss,train_acc,train_mae,val_loss,val_acc"
    assert len(metrics) == 21
    resolved = (trained / "config.resolved").read_text(encoding="utf-8")
    assert "clip_len = 12" in resolved
    assert "epochs = 20" in resolved


def test_eval_reports_metrics(dataset, trained, tmp_path, capsys):
    out = tmp_path / "evalout"
    code = cli.main(["eval", "--model", str(trained / "model.g3dc"),
                     "--manifest", str(dataset / "manifest.tsv"),
                     "--out", str(out), *TRAIN_FLAGS])
    assert code == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("val_loss ") and "val_acc" in line and "val_mae" in line
    assert (out / "eval.txt").read_text(encoding="utf-8").strip() == line


def test_predict_names_a_subject(dataset, trained, capsys):
    seq = dataset / "002" / "NM-01" / "090"
    code = cli.main(["predict", "--model", str(trained / "model.g3dc"),
                     "--sequence", str(seq), *TRAIN_FLAGS])
    assert code == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] in ("subject 1", "subject 2")
    probs = np.array([float(p) for p in out[1].split()[1:]])
    assert probs.shape == (2,)
    assert probs.sum() == pytest.approx(1.0, abs=1e-6)


def test_predict_rejects_out_of_range_start(dataset, trained, capsys):
    seq = dataset / "001" / "NM-01" / "090"
    code = cli.main(["predict", "--model", str(trained / "model.g3dc"),
                     "--sequence", str(seq), "--start", "99", *TRAIN_FLAGS])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_train_runs_are_reproducible(dataset, trained, tmp_path, capsys):
    out = tmp_path / "again"
    code = cli.main(["train", "--manifest", str(dataset / "manifest.tsv"),
                     "--out", str(out), *TRAIN_FLAGS])
    assert code == 0
    assert (out / "model.g3dc").read_bytes() == (trained / "model.g3dc").read_bytes()
    assert (out / "metrics.csv").read_bytes() == (trained / "metrics.csv").read_bytes()


# -- config files -------------------------------------------------------------


def test_config_file_with_flag_override(dataset, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# training settings\n"
        "epochs = 2\n"
        "learning_rate = 0.01  # keep it gentle\n"
        "clip_len = 12\n"
        "out_h = 32\n"
        "out_w = 32\n"
        "batch_size = 4\n",
        encoding="utf-8",
    )
    out = tmp_path / "cfgrun"
    code = cli.main(["train", "--manifest", str(dataset / "manifest.tsv"),
                     "--out", str(out), "--config", str(cfg),
                     "--epochs", "3", "--threads", "1"])
    assert code == 0
    resolved = (out / "config.resolved").read_text(encoding="utf-8")
    assert "epochs = 3" in resolved  # explicit flag beats the file
    assert "learning_rate = 0.01" in resolved
    assert "clip_len = 12" in resolved
    assert len((out / "metrics.csv").read_text(encoding="utf-8").splitlines()) == 4


def test_config_file_syntax_errors(tmp_path):
    cfg = tmp_path / "broken.cfg"
    cfg.write_text("epochs 3\n", encoding="utf-8")
    with pytest.raises(Exception, match="key = value"):
        cli.read_config_file(cfg)
    cfg.write_text("epochs = three\n", encoding="utf-8")
    values = cli.read_config_file(cfg)
    assert values == {"epochs": "three"}  # conversion happens at resolve time


# -- compare ------------------------------------------------------------------


def test_compare_writes_full_bundle(dataset, tmp_path, capsys):
    out = tmp_path / "cmp"
    code = cli.main(["compare", "--manifest", str(dataset / "manifest.tsv"),
                     "--out", str(out), "--clip-len", "12", "--out-h", "32",
                     "--out-w", "32", "--epochs", "2", "--batch-size", "4",
                     "--seed", "11", "--threads", "1"])
    assert code == 0
    for name in ("report.txt", "config.resolved", "metrics_silhouette.csv",
                 "metrics_skeleton.csv", "model_silhouette.g3dc",
                 "model_skeleton.g3dc"):
        assert (out / name).is_file()
    text = capsys.readouterr().out
    assert "Input-mode comparison" in text
    assert (out / "report.txt").read_text(encoding="utf-8") == text
