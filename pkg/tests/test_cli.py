import json

import numpy as np
import pytest

from qmanip import domains
from qmanip.cli import main


@pytest.fixture
def bundle_path(tmp_path):
    path = tmp_path / "b.json"
    assert main(["gen", "--domain", "dollar_euro", "--sbf", "2", "--seed", "1", "--out", str(path)]) == 0
    return path


def test_gen_and_verify(bundle_path, capsys):
    assert main(["verify", "--bundle", str(bundle_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 8


@pytest.mark.parametrize("method,init", [("qm", "linear"), ("mqm", "linear"), ("mqm", "naive"), ("mqm", "nonlinear")])
def test_bounds(bundle_path, tmp_path, method, init):
    out = tmp_path / "bounds.json"
    args = ["bounds", "--bundle", str(bundle_path), "--method", method, "--init", init, "--out", str(out)]
    assert main(args) == 0
    data = json.loads(out.read_text())
    assert set(data) >= {"bounds", "mask", "stats", "heatmap", "bound_iteration_time_s"}
    assert data["bounds"]["approximate"] == (method == "mqm" and init == "nonlinear")


def test_bounds_with_noise(bundle_path, tmp_path):
    out = tmp_path / "n.json"
    rc = main(["bounds", "--bundle", str(bundle_path), "--method", "mqm", "--noise-min", "-0.1", "--noise-max", "0.1",
               "--out", str(out)])
    assert rc == 0 and json.loads(out.read_text())["noise"] == [-0.1, 0.1]
    assert main(["bounds", "--bundle", str(bundle_path), "--method", "mqm", "--noise-min", "0.2", "--noise-max", "0.1",
                 "--out", str(out)]) == 1


def test_power_bundle_needs_nonlinear(tmp_path):
    path = tmp_path / "p.json"
    assert main(["gen", "--domain", "autogen", "--sbf", "3", "--exponent", "3", "--out", str(path)]) == 0
    assert main(["bounds", "--bundle", str(path), "--method", "mqm", "--init", "nonlinear", "--out",
                 str(tmp_path / "o.json")]) == 0


def test_invalid_bundle_exit_1(tmp_path):
    b = domains.dollar_euro(1, np.random.default_rng(0)).to_dict()
    b["transitions"][0]["next"][0]["p"] = 0.3
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(b))
    assert main(["verify", "--bundle", str(path)]) == 1


def test_nonconvergence_exit_2(bundle_path, tmp_path):
    assert main(["bounds", "--bundle", str(bundle_path), "--method", "qm", "--max-sweeps", "2", "--epsilon", "1e-14",
                 "--out", str(tmp_path / "o.json")]) == 2


def test_io_exit_3(tmp_path):
    assert main(["verify", "--bundle", str(tmp_path / "missing.json")]) == 3


def test_run(tmp_path):
    cfg = {"domain": {"name": "frozen_lake", "sbf": [1]}, "methods": ["QL", "MQM"], "runs": 1,
           "learn": {"episodes": 5}}
    (tmp_path / "exp.json").write_text(json.dumps(cfg))
    assert main(["run", "--config", str(tmp_path / "exp.json"), "--out", str(tmp_path / "res")]) == 0
    assert (tmp_path / "res" / "timings.csv").exists()
    cfg["typo"] = 1
    (tmp_path / "exp.json").write_text(json.dumps(cfg))
    assert main(["run", "--config", str(tmp_path / "exp.json"), "--out", str(tmp_path / "res")]) == 1
