import json

import pytest

from jumpflow.cli import SCHEMA, config_hash, main, resolve_config
from jumpflow.errors import ConfigError


def read(path):
    return path.read_text()


def test_det_ag_linear(tmp_path, capsys):
    assert main(["run", "det-ag", "--preset", "linear", "--out", str(tmp_path)]) == 0
    rep = json.loads(read(tmp_path / "report.json"))
    assert rep["passed"] and rep["residual"] < 1e-8
    assert read(tmp_path / "table.csv").splitlines()[0] == "term,estimate,stderr,n,z_score"
    man = json.loads(read(tmp_path / "manifest.json"))
    assert man["config_sha256"] == config_hash(man["config"]) == rep["config_sha256"]
    assert "wall_time_s" in man and "wall_time_s" not in rep


def test_moments_value(tmp_path):
    assert main(["run", "moments", "--alpha", "1.0", "--eta", "2", "--out", str(tmp_path)]) == 0
    rep = json.loads(read(tmp_path / "report.json"))
    assert rep["moments"][0]["value"] == pytest.approx(2.0, rel=1e-12)


def test_malformed_config_writes_nothing(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"experiment": "weak-ag", "numerics": {"n_paths": -5}}))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 2
    assert not out.exists()
    assert "n_paths" in capsys.readouterr().err


@pytest.mark.parametrize("user", [
    {"experiment": "moments", "bogus": 1},
    {"experiment": "moments", "model": {"measure": {"kind": "truncated_stable", "alpha": 2.5}}},
    {"experiment": "nope"},
    {"experiment": "det-ag", "model": {"preset": "custom", "coefficients": {"b": "__import__('os')", "bbar": "x"}}},
    {"experiment": "det-ag", "model": {"preset": "custom", "coefficients": {"b": "x"}}},
    {"experiment": "det-ag", "model": {"coefficients": {"b": "x", "bbar": "x"}}},
    {"experiment": "det-ag", "model": {"preset": "halving"}},
])
def test_config_errors_exit_2(tmp_path, user):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(user))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_unknown_key_rejected_by_resolver():
    with pytest.raises(ConfigError):
        resolve_config({"experiment": "moments", "numerics": {"n_pathz": 3}})
    assert SCHEMA["additionalProperties"] is False


def test_rerun_is_byte_identical_and_reproducible_from_manifest(tmp_path):
    args = ["run", "mecke-ipp", "--n-paths", "2000", "--seed", "7"]
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    main(args + ["--out", str(a)])
    main(args + ["--threads", "3", "--out", str(b)])
    assert read(a / "report.json") == read(b / "report.json")
    assert read(a / "table.csv") == read(b / "table.csv")
    cfg = tmp_path / "from_manifest.json"
    cfg.write_text(json.dumps(json.loads(read(a / "manifest.json"))["config"]))
    main(["run", "--config", str(cfg), "--out", str(c)])
    assert read(c / "report.json") == read(a / "report.json")


def test_check_failure_exit_1(tmp_path, capsys):
    assert main(["run", "det-ag", "--tolerance-scale", "0", "--out", str(tmp_path)]) == 1
    assert "FAIL" in capsys.readouterr().err
    assert json.loads(read(tmp_path / "report.json"))["passed"] is False


def test_suite_tampered_tolerance_and_determinism(tmp_path, capsys):
    assert main(["suite", "acceptance", "--criteria", "1,8", "--tolerance-scale", "0",
                 "--out", str(tmp_path / "t")]) == 1
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["suite", "acceptance", "--criteria", "1,8", "--out", str(a)]) == 0
    assert main(["suite", "acceptance", "--criteria", "1,8", "--out", str(b)]) == 0
    assert read(a / "report.json") == read(b / "report.json")
    assert "[PASS]  1" in capsys.readouterr().out


def test_suite_bad_criteria(tmp_path):
    assert main(["suite", "acceptance", "--criteria", "1,99", "--out", str(tmp_path)]) == 2


def test_custom_coefficients(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "flow-prop", "model": {"coefficients": {"b": "-x", "g": "0.5*cos(x)"}},
                               "numerics": {"n_paths": 20, "tangent_paths": 5}}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0


def test_custom_det_ag(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "det-ag", "model": {"preset": "custom", "y0": 0.2,
                                                                 "coefficients": {"b": "sin(x)", "bbar": "x"}}}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
