import csv
import json

import pytest

from infsum.cli import main
from infsum.data import serialize_libsvm
from infsum.synthetic import make_classification, make_separable


@pytest.fixture
def files(tmp_path):
    train = tmp_path / "train.svm"
    train.write_text(serialize_libsvm(make_classification(30, 6, 3, seed=1)))
    sep = tmp_path / "sep.svm"
    sep.write_text(serialize_libsvm(make_separable(10, 12, 5, 2)))
    return str(train), str(sep)


def test_train_writes_outputs(files, tmp_path, capsys):
    train, _ = files
    out = str(tmp_path / "r")
    rc = main(["train", "--data", train, "--test", train, "--algo", "sgd,ssag", "--gammas", "100,500",
               "--lambda", "1e-2", "--epochs", "2", "--reps", "2", "--out", out])
    assert rc == 0
    rows = list(csv.DictReader(open(out + ".csv")))
    assert len(rows) == 2 * 2 * 2 * 2
    assert all(r["test_auc"] != "" and r["wall_time_ms"] == "" for r in rows)
    summary = json.load(open(out + ".summary.json"))
    assert set(summary["best_gamma"]) == {"sgd", "ssag"}
    assert "ssag: 72 bytes" in capsys.readouterr().out


def test_auc_task_and_flags(files, tmp_path):
    _, sep = files
    out = str(tmp_path / "a")
    rc = main(["train", "--task", "auc", "--data", sep, "--algo", "ssag,adagrad", "--noise", "dropout:0.2",
               "--lambda", "1e-3", "--l1", "1e-4", "--gammas", "1000", "--epochs", "2", "--reps", "1",
               "--iterate-averaging", "--timing", "--out", out])
    assert rc == 0
    rows = list(csv.DictReader(open(out + ".csv")))
    assert {r["algorithm"] for r in rows} == {"ia-ssag", "ia-adagrad"}
    assert all(r["wall_time_ms"] != "" for r in rows)


def test_reruns_identical(files, tmp_path):
    train, _ = files
    blobs = []
    for k in range(2):
        out = str(tmp_path / f"d{k}")
        main(["train", "--data", train, "--algo", "ssaga", "--gammas", "100", "--lambda", "1e-2",
              "--epochs", "2", "--reps", "2", "--seed", "3", "--out", out])
        blobs.append(open(out + ".csv", "rb").read())
    assert blobs[0] == blobs[1]


@pytest.mark.parametrize("argv", [
    ["--task", "auc", "--algo", "ssaga"],
    ["--noise", "salt:1"],
    ["--algo", "lbfgs"],
])
def test_bad_config_exit_code(files, tmp_path, argv, capsys):
    train, _ = files
    rc = main(["train", "--data", train, "--out", str(tmp_path / "x")] + argv)
    assert rc == 2
    assert capsys.readouterr().err.startswith("error:")


def test_parse_error_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.svm"
    bad.write_text("1 1:1\n1 2:oops\n")
    assert main(["train", "--data", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_meminfo(capsys):
    assert main(["meminfo", "--algo", "ssag", "--n", "10", "--d", "1000000"]) == 0
    assert "8000024 bytes" in capsys.readouterr().out
    main(["meminfo", "--algo", "sgd", "--n", "10", "--d", "10"])
    assert capsys.readouterr().out.startswith("sgd: 0 bytes")


def test_verify_subset(capsys):
    assert main(["verify", "--only", "1,5"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("[PASS]  1.") and out[1].startswith("[PASS]  5.")
    assert out[-1] == "2/2 criteria passed"
