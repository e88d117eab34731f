import json, os

import pandas as pd
import pytest

from npmoment.__main__ import main


def run (capsys, *argv):
    status = main(list(argv))
    captured = capsys.readouterr()
    return status, captured.out, captured.err


@pytest.fixture
def data_file (tmp_path, capsys):
    path = str(tmp_path / "data.csv")
    status, out, err = run(capsys, "synth", "--n", "200", "--D", "3", "--d", "2", "--seed", "4", "--test-points", "2", "--out", path)
    assert status == 0
    return path


DATA_ARGS = ["--covariates", "x0..x2", "--outcome", "y", "--x", "0,0,0"]


def test_zeta (capsys):
    status, out, err = run(capsys, "zeta", "2")
    assert status == 0
    output = json.loads(out)
    assert output["zeta"] == "5/2"
    assert output["value"] == 2.5

    status, out, err = run(capsys, "zeta", "1", "10")
    assert json.loads(out)["eta"] == pytest.approx(1 / 19)


def test_synth_writes_sidecar (data_file):
    frame = pd.read_csv(data_file)
    assert list(frame.columns) == ["x0", "x1", "x2", "y"]
    assert len(frame) == 200
    with open(os.path.splitext(data_file)[0] + ".json") as input:
        sidecar = json.load(input)
    assert len(sidecar["test_points"]) == 2
    assert len(sidecar["truth"]) == 2


def test_weights (capsys, data_file):
    status, out, err = run(capsys, "weights", "--data", data_file, *DATA_ARGS, "--s", "20", "--k", "2")
    assert status == 0
    lines = out.strip().splitlines()
    assert lines[0] == "observation,weight"
    assert sum(float(line.split(",")[1]) for line in lines[1:]) == pytest.approx(1.0)


def test_weights_need_s (capsys, data_file):
    status, out, err = run(capsys, "weights", "--data", data_file, *DATA_ARGS)
    assert status == 2
    assert err.startswith("npmoment: ")


def test_weights_have_no_adaptive_size (capsys, data_file):
    with pytest.raises(SystemExit) as info:
        main(["weights", "--data", data_file, *DATA_ARGS, "--adaptive"])
    assert info.value.code == 2


def test_size_must_be_chosen (capsys, data_file):
    for command in ("estimate", "ci"):
        status, out, err = run(capsys, command, "--data", data_file, *DATA_ARGS)
        assert status == 2
        assert "--s or --adaptive" in err
        assert out == ""


def test_fixed_and_adaptive_size_conflict (capsys, data_file):
    with pytest.raises(SystemExit) as info:
        main(["estimate", "--data", data_file, *DATA_ARGS, "--s", "20", "--adaptive"])
    assert info.value.code == 2


def test_estimate (capsys, data_file):
    status, out, err = run(capsys, "estimate", "--data", data_file, *DATA_ARGS, "--s", "20")
    assert status == 0
    output = json.loads(out)
    assert output["method"] == "closed-form"
    assert output["s_used"] == 20
    assert output["adaptive"] is None

    status, out, err = run(capsys, "estimate", "--data", data_file, *DATA_ARGS, "--adaptive")
    assert status == 0
    output = json.loads(out)
    assert output["adaptive"]["delta"] == pytest.approx(1 / 200)
    assert output["s_used"] == output["adaptive"]["s_star"]


def test_ci (capsys, data_file):
    status, out, err = run(capsys, "ci", "--data", data_file, *DATA_ARGS, "--adaptive", "--gamma", "0.9")
    assert status == 0
    output = json.loads(out)
    (lower, upper), = output["ci"]
    assert lower < output["theta"][0] < upper
    assert output["gamma"] == 0.9
    assert output["s_used"] == output["adaptive"]["s_zeta"]


def test_adapt_with_trace (capsys, data_file, tmp_path):
    trace = str(tmp_path / "trace.csv")
    status, out, err = run(capsys, "adapt", "--data", data_file, *DATA_ARGS, "--k", "1", "--trace", trace)
    assert status == 0
    output = json.loads(out)
    assert output["zeta"] == 0.1
    assert "d_hat" in output
    frame = pd.read_csv(trace)
    assert list(frame.columns) == ["s", "H", "G"]
    assert frame.s.iloc[0] == 200


def test_bad_moment (capsys, data_file):
    status, out, err = run(capsys, "estimate", "--data", data_file, *DATA_ARGS, "--s", "20", "--moment", "median")
    assert status == 2


def test_singular_treatment (capsys, write_file):
    rows = ["x0,y,t0"] + ["{},{},0".format(i / 10, i) for i in range(10)]
    path = write_file("het.csv", "\n".join(rows) + "\n")
    status, out, err = run(
        capsys, "ci", "--data", path, "--covariates", "x0", "--outcome", "y", "--treatment", "t0",
        "--x", "0.5", "--moment", "het_effect", "--s", "5",
    )
    assert status == 3
    assert "singular" in err or "treatments" in err


def test_bad_config (capsys, write_file, tmp_path):
    path = write_file("bad.json", json.dumps({"seed": 1, "generator": {}, "replicas": 2, "colour": "blue"}))
    status, out, err = run(capsys, "experiment", "coverage", "--config", path, "--out-dir", str(tmp_path / "out"))
    assert status == 2
    assert "colour" in err


def test_experiment (capsys, write_file, tmp_path):
    config = {
        "seed": 3,
        "generator": {"n": 150, "D": 3, "d": 2},
        "k": [1],
        "policies": ["adaptive", "theory-d"],
        "replicas": 2,
        "test_points": 2,
    }
    path = write_file("small.json", json.dumps(config))
    out_dir = tmp_path / "out"
    status, out, err = run(capsys, "experiment", "coverage", "--config", path, "--out-dir", str(out_dir))
    assert status == 0
    for name in ("intervals.csv", "coverage_points.csv", "coverage.csv", "s_trace.csv", "manifest.json"):
        assert (out_dir / name).exists()
