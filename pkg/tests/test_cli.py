import csv
import json

import numpy as np
import pytest

from core.checkpoint import load_checkpoint
from core.dataset import load_archive
from core.errors import EXIT_FAILURE, EXIT_IO_ERROR, EXIT_OK, EXIT_USER_ERROR
from tests.conftest import TOY_CLASSES, small_synth_spec
from ui.cli import build_parser, main

TOY_RUN = {
    "model": {"conv_filters": 4, "conv_kernel": 5, "pool_size": 2, "lstm_units": 3,
              "dropout1": 0.0, "dropout2": 0.0},
    "train": {"epochs": 2, "batch_size": 16, "learning_rate": 0.05, "seed": 1},
    "split": {"train_fraction": 0.25, "stratified": True},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic recordings and a prepared archive of 4 x 64 windows of 20 x 2"""
    root = tmp_path_factory.mktemp("cli")
    spec = root / "spec.json"
    spec.write_text(json.dumps(small_synth_spec()), encoding="utf-8")
    assert main(["synth", "--config", str(spec), "--out", str(root / "raw"), "-q"]) == EXIT_OK
    classes = [f"{name}={root / 'raw' / f'class_{i:02d}_{name}.vib'}" for i, name in enumerate(TOY_CLASSES)]
    args = ["prepare", "--window", "20", "--out", str(root / "archive"), "-q"]
    for entry in classes:
        args += ["--class", entry]
    assert main(args) == EXIT_OK
    run = root / "run.json"
    run.write_text(json.dumps(TOY_RUN), encoding="utf-8")
    return root


def _train(workspace, out, *extra):
    return main(["train", "--config", str(workspace / "run.json"), "--archive", str(workspace / "archive"),
                 "--out", str(out), "--no-wall-time", "-q", *extra])


def _metric_rows(path):
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.reader(f))


class TestSynthAndPrepare:

    def test_synth_files(self, workspace):
        raw = workspace / "raw"
        assert sorted(p.name for p in raw.glob("*.vib")) == [
            f"class_{i:02d}_{name}.vib" for i, name in enumerate(TOY_CLASSES)]
        assert json.loads((raw / "synth_spec.json").read_text(encoding="utf-8"))["seed"] == 3

    def test_archive_counts(self, workspace):
        ws = load_archive(workspace / "archive")
        assert len(ws) == 256
        assert ws.class_counts() == [64, 64, 64, 64]
        assert (ws.window_len, ws.channels) == (20, 2)
        assert ws.class_names == TOY_CLASSES

    def test_prepare_is_deterministic(self, workspace, tmp_path, capsys):
        name = TOY_CLASSES[0]
        source = workspace / "raw" / f"class_00_{name}.vib"
        for out in ("a", "b"):
            assert main(["prepare", "--class", f"{name}={source}", "--window", "20",
                         "--out", str(tmp_path / out)]) == EXIT_OK
        assert "Healthy: 64 windows" in capsys.readouterr().out
        assert (tmp_path / "a" / "class_00.vib").read_bytes() == (tmp_path / "b" / "class_00.vib").read_bytes()

    def test_empty_class_directory(self, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        code = main(["prepare", "--class", f"Healthy={tmp_path / 'empty'}", "--window", "20",
                     "--out", str(tmp_path / "out")])
        assert code == EXIT_USER_ERROR
        assert "Healthy" in capsys.readouterr().err

    def test_ragged_text_recording(self, tmp_path, capsys):
        path = tmp_path / "rec.txt"
        path.write_text("1 2\n3 4\n5\n", encoding="utf-8")
        code = main(["prepare", "--class", f"Healthy={path}", "--window", "1", "--out", str(tmp_path / "out")])
        assert code == EXIT_USER_ERROR
        assert "rec.txt:3" in capsys.readouterr().err

    def test_non_utf8_recording(self, tmp_path, capsys):
        path = tmp_path / "rec.txt"
        path.write_bytes(b"1 2\n3 \xff\n")
        code = main(["prepare", "--class", f"Healthy={path}", "--window", "1", "--out", str(tmp_path / "out")])
        assert code == EXIT_USER_ERROR
        assert "rec.txt:2" in capsys.readouterr().err

    def test_output_path_is_a_file(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("x", encoding="utf-8")
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps(small_synth_spec()), encoding="utf-8")
        assert main(["synth", "--config", str(spec), "--out", str(blocker)]) == EXIT_IO_ERROR


class TestTrain:

    def test_outputs(self, workspace, tmp_path, capsys):
        out = tmp_path / "run"
        assert _train(workspace, out) == EXIT_OK
        rows = _metric_rows(out / "metrics.csv")
        assert len(rows) == 3
        assert rows[0] == ["epoch", "train_loss", "train_acc", "test_loss", "test_acc", "seconds"]
        assert [r[0] for r in rows[1:]] == ["1", "2"]
        assert all(r[5] == "0.000" for r in rows[1:])
        assert (out / "model.crn").is_file() and (out / "run_config.toml").is_file()
        confusion = json.loads((out / "confusion.json").read_text(encoding="utf-8"))
        counts = np.array(confusion["counts"])
        assert counts.sum() == 192
        assert confusion["accuracy"] == pytest.approx(np.trace(counts) / counts.sum())
        assert "final train_acc=" in capsys.readouterr().out

    def test_same_seed_identical_outputs(self, workspace, tmp_path):
        assert _train(workspace, tmp_path / "a") == EXIT_OK
        assert _train(workspace, tmp_path / "b") == EXIT_OK
        for name in ("metrics.csv", "model.crn", "confusion.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name

    def test_default_flags_are_reproducible(self, workspace, tmp_path):
        for out in ("a", "b"):
            assert main(["train", "--config", str(workspace / "run.json"), "--archive", str(workspace / "archive"),
                         "--out", str(tmp_path / out), "-q"]) == EXIT_OK
        assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()

    def test_wall_time_opt_in(self, workspace, tmp_path):
        out = tmp_path / "timed"
        assert _train(workspace, out, "--wall-time") == EXIT_OK
        assert all(float(row[5]) >= 0.0 for row in _metric_rows(out / "metrics.csv")[1:])
        assert load_checkpoint(out / "model.crn").meta["train"]["record_wall_time"] is True

    def test_zero_learning_rate(self, workspace, tmp_path):
        out = tmp_path / "frozen"
        assert _train(workspace, out, "--learning-rate", "0", "--epochs", "3", "--no-shuffle") == EXIT_OK
        accuracies = {row[2] for row in _metric_rows(out / "metrics.csv")[1:]}
        assert len(accuracies) == 1

    def test_resume_appends_epochs(self, workspace, tmp_path):
        out = tmp_path / "resumed"
        assert _train(workspace, out, "--epochs", "1") == EXIT_OK
        assert _train(workspace, out, "--epochs", "1", "--resume", str(out / "model.crn")) == EXIT_OK
        assert [r[0] for r in _metric_rows(out / "metrics.csv")[1:]] == ["1", "2"]

    def test_indivisible_batch_size(self, workspace, tmp_path, capsys):
        assert _train(workspace, tmp_path / "bad", "--batch-size", "15") == EXIT_USER_ERROR
        assert "feasible batch sizes" in capsys.readouterr().err

    def test_missing_archive(self, workspace, tmp_path, capsys):
        code = main(["train", "--config", str(workspace / "run.json"), "--archive", str(tmp_path / "none"),
                     "--out", str(tmp_path / "out")])
        assert code == EXIT_USER_ERROR
        assert "does not exist" in capsys.readouterr().err

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as info:
            main(["train", "--momentum", "0.9"])
        assert info.value.code == EXIT_USER_ERROR


@pytest.fixture(scope="module")
def trained(workspace):
    out = workspace / "trained"
    assert _train(workspace, out) == EXIT_OK
    return out / "model.crn"


class TestEvalAndPredict:

    def test_eval_prints_accuracy_and_writes_confusion(self, workspace, trained, tmp_path, capsys):
        capsys.readouterr()
        code = main(["eval", "--checkpoint", str(trained), "--archive", str(workspace / "archive"),
                     "--out", str(tmp_path)])
        assert code == EXIT_OK
        printed = capsys.readouterr().out
        line = next(l for l in printed.splitlines() if l.startswith("accuracy="))
        accuracy = float(line.split()[0].split("=")[1])
        confusion = json.loads((tmp_path / "confusion.json").read_text(encoding="utf-8"))
        counts = np.array(confusion["counts"])
        assert "samples=256" in line
        assert accuracy == pytest.approx(np.trace(counts) / counts.sum(), abs=1e-4)

    def test_eval_rejects_other_classes(self, workspace, trained, tmp_path):
        source = workspace / "raw" / "class_00_Healthy.vib"
        args = ["prepare", "--window", "20", "--out", str(tmp_path / "other")]
        for name in ("A", "B", "C", "D"):
            args += ["--class", f"{name}={source}"]
        assert main(args) == EXIT_OK
        code = main(["eval", "--checkpoint", str(trained), "--archive", str(tmp_path / "other")])
        assert code == EXIT_USER_ERROR

    def test_predict_rows(self, workspace, trained, capsys):
        capsys.readouterr()
        signal = workspace / "raw" / "class_02_Inner-race-fault.vib"
        assert main(["predict", "--checkpoint", str(trained), str(signal)]) == EXIT_OK
        rows = list(csv.reader(capsys.readouterr().out.splitlines()))
        assert rows[0] == ["index", "class"] + [f"score_{name}" for name in TOY_CLASSES]
        assert len(rows) == 1 + 64
        assert all(row[1] in TOY_CLASSES for row in rows[1:])

    def test_predict_short_signal(self, trained, tmp_path, capsys):
        path = tmp_path / "short.txt"
        path.write_text("\n".join("0.1 0.2" for _ in range(5)) + "\n", encoding="utf-8")
        assert main(["predict", "--checkpoint", str(trained), str(path)]) == EXIT_USER_ERROR

    def test_predict_wrong_channels(self, trained, tmp_path):
        path = tmp_path / "mono.txt"
        path.write_text("\n".join("0.1" for _ in range(40)) + "\n", encoding="utf-8")
        assert main(["predict", "--checkpoint", str(trained), str(path)]) == EXIT_USER_ERROR

    def test_corrupted_checkpoint(self, tmp_path):
        path = tmp_path / "broken.crn"
        path.write_bytes(b"NOPE")
        assert main(["predict", "--checkpoint", str(path), str(path)]) == EXIT_USER_ERROR


class TestGradcheck:

    def test_default_passes(self, tmp_path, capsys):
        assert main(["gradcheck", "--out", str(tmp_path)]) == EXIT_OK
        printed = capsys.readouterr().out
        assert "gradcheck passed" in printed
        assert "crnn.lstm.w_f" in printed
        assert (tmp_path / "gradcheck.txt").is_file()

    def test_impossible_tolerance_fails(self, capsys):
        assert main(["gradcheck", "--tolerance", "1e-12"]) == EXIT_FAILURE
        assert "FAILED" in capsys.readouterr().out


def test_parser_lists_every_command():
    parser = build_parser()
    for command in ("prepare", "synth", "train", "eval", "predict", "gradcheck"):
        args = parser.parse_args([command] + {"eval": ["--checkpoint", "m"],
                                               "predict": ["--checkpoint", "m", "sig"]}.get(command, []))
        assert args.command == command
