import json

import numpy as np
import pytest

from sdrmatch import load_csv
from sdrmatch.cli import main


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "syn.csv"
    assert main(["synth", "--n", "150", "--p", "5", "--confounding", "2", "--seed", "4",
                 "--output", str(path)]) == 0
    return path


def test_synth_writes_csv_and_metadata(synth_csv):
    d = load_csv(synth_csv, "w", "y")
    assert (d.n, d.p) == (150, 5)
    meta = json.loads(synth_csv.with_suffix(".meta.json").read_text())
    assert meta["true_ace"] == pytest.approx(2.0)
    assert meta["spec"]["seed"] == 4


@pytest.mark.parametrize("method", ["cesd", "mdm", "psm"])
def test_estimate(synth_csv, tmp_path, method):
    out = tmp_path / "r.json"
    rc = main(["estimate", "--input", str(synth_csv), "--method", method, "--estimand", "act",
               "--max-iter", "3", "--bootstrap", "100", "--seed", "2", "--output", str(out)])
    assert rc == 0
    res = json.loads(out.read_text())
    assert res["method_tag"] == method and res["estimand"] == "ACT"
    assert res["ci_low"] <= res["ci_high"] and res["seed"] == 2


def test_estimate_stdout(synth_csv, capsys):
    assert main(["estimate", "--input", str(synth_csv), "--method", "mdm"]) == 0
    assert json.loads(capsys.readouterr().out)["n_used"] == 150


def test_reduce_then_estimate(synth_csv, tmp_path, capsys):
    proj = tmp_path / "proj.json"
    assert main(["reduce", "--input", str(synth_csv), "--dim", "2", "--sigma", "3",
                 "--max-iter", "4", "--output", str(proj)]) == 0
    payload = json.loads(proj.read_text())
    assert np.array(payload["matrix"]).shape == (5, 2)
    assert payload["config"]["kernel_width"] == 3.0
    assert main(["estimate", "--input", str(synth_csv), "--projection", str(proj)]) == 0
    fixed = json.loads(capsys.readouterr().out)
    assert main(["estimate", "--input", str(synth_csv), "--sigma", "3", "--max-iter", "4"]) == 0
    fitted = json.loads(capsys.readouterr().out)
    assert fixed["point"] == fitted["point"]


def test_projection_dimension_mismatch(synth_csv, tmp_path):
    proj = tmp_path / "proj.json"
    proj.write_text(json.dumps({"input_dim": 3, "reduced_dim": 1,
                                "matrix": [[1.0], [0.0], [0.0]]}))
    assert main(["estimate", "--input", str(synth_csv), "--projection", str(proj)]) == 2


def test_benchmark_synthetic(tmp_path):
    out = tmp_path / "b.json"
    rc = main(["benchmark", "--n", "120", "--p", "4", "--n-seeds", "2", "--method", "mdm",
               "--method", "psm", "--jobs", "2", "--output", str(out)])
    assert rc == 0
    report = json.loads(out.read_text())
    assert [m["method_tag"] for m in report["methods"]] == ["mdm", "psm"]
    assert report["metadata"]["seeds"] == [0, 1]
    assert report["methods"][0]["rmse"] is not None


def test_benchmark_input_without_truth(synth_csv, capsys):
    assert main(["benchmark", "--input", str(synth_csv), "--method", "mdm",
                 "--n-seeds", "1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["methods"][0]["rmse"] is None


def test_diagnose(synth_csv, tmp_path, capsys):
    outdir = tmp_path / "diag"
    assert main(["diagnose", "--input", str(synth_csv), "--max-iter", "3", "--bins", "20",
                 "--output", str(outdir)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert set(summary) == {"z1", "z2", "propensity", "mean_reduced_coefficient"}
    lines = (outdir / "overlap_z1.csv").read_text().splitlines()
    assert lines[0] == "bin_center,treated_density,control_density"
    assert len(lines) == 21


@pytest.mark.parametrize("argv", [
    [],
    ["estimate"],
    ["estimate", "--input", "x.csv", "--method", "ipw"],
    ["estimate", "--input", "x.csv", "--dim", "0"],
    ["estimate", "--input", "x.csv", "--ci-level", "1.5"],
    ["estimate", "--input", "x.csv", "--bootstrap", "50"],
    ["estimate", "--input", "x.csv", "--max-iter", "-1"],
    ["diagnose", "--input", "x.csv", "--bins", "5", "--output", "d"],
    ["frobnicate"],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        rc = main(argv)
        raise SystemExit(rc)
    assert exc.value.code == 1


def test_projection_with_baseline_is_usage_error(synth_csv, tmp_path):
    assert main(["estimate", "--input", str(synth_csv), "--method", "mdm",
                 "--projection", str(tmp_path / "p.json")]) == 1


@pytest.mark.parametrize("content, extra", [
    (None, []),
    ("w,y,x\n0,1,1\n2,1,1\n", []),
    ("w,y,x\n0,1,a\n1,1,1\n", []),
    ("w,y,x\n1,1,1\n1,2,2\n1,3,3\n", []),
    ("t,y,x\n0,1,1\n1,2,2\n", []),
    ("w,y,x1,x2\n0,1,1,2\n1,2,2,3\n0,3,3,5\n1,2,1,4\n", ["--dim", "2"]),
])
def test_data_errors(tmp_path, content, extra, capsys):
    path = tmp_path / "d.csv"
    if content is not None:
        path.write_text(content)
    assert main(["estimate", "--input", str(path), *extra]) == 2
    assert "data error" in capsys.readouterr().err


def test_numerical_error_mapped(monkeypatch, synth_csv, capsys):
    from sdrmatch import NumericalError, cli

    def boom(*args, **kwargs):
        raise NumericalError("singular")

    monkeypatch.setattr(cli, "make_estimator", boom)
    assert main(["estimate", "--input", str(synth_csv)]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_module_entry_point(synth_csv):
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "sdrmatch", "estimate", "--input",
                           str(synth_csv), "--method", "mdm"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["method_tag"] == "mdm"
