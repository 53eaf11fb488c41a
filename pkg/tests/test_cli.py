import csv
import io

import numpy as np
import pytest

from gowerweights.cli import main
from gowerweights.gower import DissimilarityMatrix

SCHEMA = """\
smoke = binary-symmetric [levels: nonsmoker, smoker]
age = numeric
edu = ordinal [levels: low < mid < high]
"""
DATA = """\
smoke,age,edu
smoker,15,low
smoker,78,high
nonsmoker,100,mid
smoker,24,
nonsmoker,24,low
nonsmoker,51,high
"""


@pytest.fixture
def files(tmp_path):
    (tmp_path / "s.txt").write_text(SCHEMA)
    (tmp_path / "d.csv").write_text(DATA)
    return tmp_path


def args(files, *rest):
    return ["--data", str(files / "d.csv"), "--schema", str(files / "s.txt"), *rest]


def test_validate_clean(files, capsys):
    assert main(["validate", *args(files)]) == 0
    out = capsys.readouterr().out
    assert "missing rate edu: 0.1667" in out and "status: warnings" not in out


def test_validate_warning_and_fatal(files, capsys):
    (files / "d.csv").write_text("smoke,age,edu\nsmoker,5,low\nsmoker,5,high\n")
    assert main(["validate", *args(files)]) == 1
    (files / "d.csv").write_text("smoke,age,edu\nsmoker,5,low\n,,\n")
    assert main(["validate", *args(files)]) == 2
    assert "row 2" in capsys.readouterr().err


def test_dist_formats(files, capsys):
    assert main(["dist", *args(files), "--weights", "uniform"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["id", "1", "2", "3", "4", "5", "6"]
    sq = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    np.testing.assert_array_equal(sq, sq.T)
    assert sq[0, 1] == pytest.approx((0 + 63 / 85 + 1) / 3)

    out = files / "m.bin"
    assert main(["dist", *args(files), "--format", "bin", "--out", str(out)]) == 0
    dm = DissimilarityMatrix.from_bytes(out.read_bytes())
    np.testing.assert_allclose(dm.square(), sq, atol=0)


def test_dist_weights_file(files, capsys):
    (files / "w.csv").write_text("variable,weight,correlation\nsmoke,0,NA\nage,1,NA\nedu,0,NA\n")
    assert main(["dist", *args(files), "--weights", str(files / "w.csv")]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert float(rows[1][2]) == pytest.approx(63 / 85)


def test_weights_command(files, capsys):
    argv = ["weights", *args(files), "--mode", "wPbG", "--ga-pop", "10", "--ga-gens", "10", "--seed", "3",
            "--trace", str(files / "trace.txt")]
    assert main(argv) == 0
    first = capsys.readouterr()
    assert first.out.splitlines()[0] == "variable,weight,correlation"
    assert "objective uniform" in first.err and "path: ga" in first.err
    assert "generation 0" in (files / "trace.txt").read_text()
    assert main(argv) == 0
    assert capsys.readouterr().out == first.out


def test_env_seed_fallback(files, capsys, monkeypatch):
    base = ["weights", *args(files), "--mode", "wSG", "--ga-pop", "8", "--ga-gens", "5"]
    monkeypatch.setenv("GOWER_SEED", "7")
    main(base)
    env_out = capsys.readouterr().out
    monkeypatch.delenv("GOWER_SEED")
    main(base + ["--seed", "7"])
    assert capsys.readouterr().out == env_out


def test_fatal_on_bad_input(files, capsys):
    (files / "d.csv").write_text("smoke,age,edu\nsmoker,abc,low\n")
    assert main(["dist", *args(files)]) == 2
    assert "row 1" in capsys.readouterr().err


def test_export_proxy_round_trip(tmp_path, capsys):
    d, s = tmp_path / "p.csv", tmp_path / "p.txt"
    assert main(["export-proxy", "--data-out", str(d), "--schema-out", str(s), "--n", "60"]) == 0
    assert main(["validate", "--data", str(d), "--schema", str(s)]) == 0


def test_knn_sim_small(capsys):
    assert main(["knn-sim", "--iters", "2", "--k", "7", "--modes", "unwG", "wPG", "--noisy", "--seed", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("mode,noisy,k,mean_accuracy")
    assert len(lines) == 1 + 2 * 2


def test_impute_sim_small(capsys):
    assert main(["impute-sim", "--reps", "2", "--vars", "2", "--modes", "unwG", "wSbG", "--seed", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "mode,variables,w_1,w_2,srB_x1000,srRMSE_x1000,sDQ"
    assert len(lines) == 3
