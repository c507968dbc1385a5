"""Command-line surface: artifacts, exit codes, config round trips."""

import json
import os

import numpy as np
import pytest

from cgmix.cli import main
from cgmix import load_csv, load_params, save_csv

from conftest import random_mixture_dataset


@pytest.fixture
def toy_csv(tmp_path, rng):
    n = 50
    x = rng.standard_normal((n, 2))
    y = (1.0 + 2.0 * x[:, 0] - x[:, 1] + 0.1 * rng.standard_normal(n))[:, None]
    delta = np.ones((n, 1), dtype=int)
    delta[:10] = 0
    yy = np.where(delta.astype(bool), y, np.nan)
    from cgmix import Dataset
    path = str(tmp_path / "toy.csv")
    save_csv(path, Dataset(x, yy, delta))
    return path, x, y, delta


def test_fit_g1_matches_closed_form(toy_csv, tmp_path):
    path, x, y, delta = toy_csv
    out = str(tmp_path / "fit")
    assert main(["fit", "--data", path, "--g", "1", "--out", out]) == 0
    params, design, doc = load_params(out + ".params.json")
    resp = delta[:, 0].astype(bool)
    xa = np.hstack([np.ones((resp.sum(), 1)), x[resp]])
    ref = np.linalg.lstsq(xa, y[resp], rcond=None)[0]
    np.testing.assert_allclose(params.B[0], ref, atol=1e-6)
    assert doc["bic"] == pytest.approx(doc["bic"])
    assert os.path.exists(out + ".summary.txt")


def test_impute_zero_missing_is_identity(tmp_path, rng):
    data = random_mixture_dataset(rng, n=40, missing=0.0)
    src = str(tmp_path / "full.csv")
    save_csv(src, data)
    fit_out = str(tmp_path / "f")
    assert main(["fit", "--data", src, "--g", "1", "--out", fit_out]) == 0
    imp_out = str(tmp_path / "i")
    assert main(["impute", "--data", src, "--params", fit_out + ".params.json",
                 "--out", imp_out]) == 0
    back = load_csv(imp_out + ".completed.csv")
    np.testing.assert_array_equal(back.y, data.y)
    frac = open(imp_out + ".fractional.csv").read().strip().splitlines()
    assert len(frac) == 1                       # header only: nothing imputed


def test_impute_fills_missing(toy_csv, tmp_path):
    path, x, y, delta = toy_csv
    fit_out = str(tmp_path / "f")
    main(["fit", "--data", path, "--g", "1", "--out", fit_out])
    imp_out = str(tmp_path / "i")
    assert main(["impute", "--data", path, "--params", fit_out + ".params.json",
                 "--out", imp_out]) == 0
    back = load_csv(imp_out + ".completed.csv")
    assert back.delta.all()
    # regression imputation should land close to the linear truth
    assert np.abs(back.y[:10, 0] - y[:10, 0]).max() < 1.0


def test_select_g_artifacts(toy_csv, tmp_path):
    path, *_ = toy_csv
    out = str(tmp_path / "sel")
    assert main(["select-g", "--data", path, "--g-max", "2",
                 "--n-starts", "1", "--out", out]) == 0
    lines = open(out + ".bic.csv").read().strip().splitlines()
    assert lines[0] == "G,bic,loglik,converged,selected"
    assert len(lines) == 3
    assert sum(int(l.split(",")[-1]) for l in lines[1:]) == 1
    assert os.path.exists(out + ".params.json")


def test_cv_with_fixed_lambda(toy_csv, tmp_path):
    path, *_ = toy_csv
    out = str(tmp_path / "cv")
    assert main(["cv", "--data", path, "--g", "2", "--lambda", "0.5",
                 "--n-starts", "1", "--out", out]) == 0
    lines = open(out + ".cv.csv").read().strip().splitlines()
    assert lines[0] == "lambda,cv_error,selected"
    params, _design, doc = load_params(out + ".params.json")
    assert doc["lambda"] == 0.5


def test_jackknife_report_shape(toy_csv, tmp_path):
    path, *_ = toy_csv
    out = str(tmp_path / "jk")
    assert main(["jackknife", "--data", path, "--g", "1", "--groups", "5",
                 "--n-starts", "1", "--out", out]) == 0
    lines = open(out + ".jackknife.csv").read().strip().splitlines()
    assert lines[0] == "statistic,estimate,variance,ci_lower,ci_upper"
    stats = [l.split(",")[0] for l in lines[1:]]
    assert stats == ["q1", "median", "mean", "q3"]
    for line in lines[1:]:
        vals = [float(v) for v in line.split(",")[1:]]
        assert all(np.isfinite(vals))
        assert vals[2] <= vals[0] <= vals[3]    # ci_lower <= estimate <= ci_upper


def test_simulate_reports_are_byte_identical(tmp_path):
    args = ["simulate", "--model", "M3", "--reps", "2", "--n", "80",
            "--N", "400", "--seed", "7", "--g-max", "2", "--n-starts", "1",
            "--methods", "full,cgmm"]
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(args + ["--out", out1]) == 0
    assert main(args + ["--out", out2]) == 0
    b1 = open(out1 + ".report.txt", "rb").read()
    b2 = open(out2 + ".report.txt", "rb").read()
    assert b1 == b2
    text = b1.decode()
    assert "pmm" in text and "n/a" in text      # placeholder column present


def test_print_config_round_trip(tmp_path, capsys):
    assert main(["simulate", "--model", "M4", "--reps", "3", "--seed", "11",
                 "--print-config"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["model"] == "M4" and doc["reps"] == 3 and doc["seed"] == 11
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps(doc))
    assert main(["simulate", "--config", str(cfg_file), "--print-config"]) == 0
    doc2 = json.loads(capsys.readouterr().out)
    assert doc2 == doc


def test_exit_codes(tmp_path, capsys, toy_csv):
    path, *_ = toy_csv
    # usage: unknown flag
    assert main(["fit", "--nonsense"]) == 1
    # usage: unknown config key
    bad = tmp_path / "bad.json"
    bad.write_text('{"bogus_key": 1}')
    assert main(["fit", "--config", str(bad)]) == 1
    assert "error: usage" in capsys.readouterr().err
    # usage: missing required setting
    assert main(["fit"]) == 1
    capsys.readouterr()
    # data: missing x cell
    df = tmp_path / "bad.csv"
    df.write_text("x1,y1\nNA,1\n")
    assert main(["fit", "--data", str(df), "--g", "1"]) == 2
    assert "error: data" in capsys.readouterr().err
    # numeric: more components than distinguishable support
    tiny = tmp_path / "tiny.csv"
    tiny.write_text("x1,y1\n1,1\n1,1\n1,1\n")
    code = main(["fit", "--data", str(tiny), "--g", "5", "--n-starts", "1",
                 "--out", str(tmp_path / "t")])
    assert code == 3
    assert "error: numeric" in capsys.readouterr().err


def test_seed_changes_simulate_output(tmp_path):
    base = ["simulate", "--model", "M3", "--reps", "2", "--n", "80",
            "--N", "400", "--g-max", "1", "--n-starts", "1",
            "--methods", "full,cgmm"]
    assert main(base + ["--seed", "1", "--out", str(tmp_path / "s1")]) == 0
    assert main(base + ["--seed", "2", "--out", str(tmp_path / "s2")]) == 0
    t1 = open(str(tmp_path / "s1") + ".report.txt").read()
    t2 = open(str(tmp_path / "s2") + ".report.txt").read()
    assert t1 != t2
