import json

import numpy as np
import pytest

from mel.cli import main, parse_list, parse_point_weight, parse_scalar
from mel.errors import ConfigError


def test_parse_scalar_fractions_and_pi():
    assert parse_scalar("1/32") == pytest.approx(1 / 32)
    assert parse_scalar("8pi") == pytest.approx(8 * np.pi)
    assert parse_scalar("pi") == pytest.approx(np.pi)
    assert parse_scalar("2pi/3") == pytest.approx(2 * np.pi / 3)
    assert parse_scalar("0.5") == 0.5
    assert parse_scalar("-1.05") == -1.05


def test_parse_point_weight():
    coords, w = parse_point_weight("0,0,0:1")
    assert coords == (0.0, 0.0, 0.0)
    assert w == 1.0
    with pytest.raises(ConfigError):
        parse_point_weight("nonsense")


def test_parse_list():
    assert parse_list("1/8,1/16,1/32") == pytest.approx([1 / 8, 1 / 16, 1 / 32])


def test_list_command(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert len(out.strip().splitlines()) >= 12
    assert "explicit-profiles" in out


def test_run_check_pass(tmp_path):
    assert main(["run", "explicit-profiles", "--check",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "explicit-profiles.csv").exists()
    report = json.loads((tmp_path / "explicit-profiles.json").read_text())
    assert report["pass"] is True


def test_run_unknown_experiment_exits_1():
    assert main(["run", "does-not-exist"]) == 1


def test_bad_config_schema_exits_1(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"schema": "bogus/9", "experiment": "explicit-profiles"}))
    assert main(["run", "--config", str(cfg)]) == 1


def test_config_runs_experiment(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"schema": "mel-experiment/1",
                               "experiment": "explicit-profiles",
                               "seed": 3, "params": {}}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 0


def test_seed_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("MEL_SEED", "42")
    assert main(["run", "explicit-profiles", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "explicit-profiles.json").read_text())
    assert report["seed"] == 42


def test_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["run", "kernel-estimates", "--seed", "5",
                     "--out", str(out)]) == 0
    assert (a / "kernel-estimates.csv").read_bytes() == \
           (b / "kernel-estimates.csv").read_bytes()


def test_radial_classify_command(capsys):
    assert main(["radial", "classify", "--q", "2", "--n", "3",
                 "--u1", "1", "--du1", "-1.05"]) == 0
    assert "Weak" in capsys.readouterr().out


def test_capacity_command(tmp_path, capsys):
    assert main(["capacity", "--n", "3", "--m", "2", "--p", "2",
                 "--set", "point", "--h-list", "1/4,1/8",
                 "--out", str(tmp_path)]) == 0
    body = (tmp_path / "capacity.csv").read_text().splitlines()
    assert body[0].startswith("h,capacity")
    assert len(body) == 3


def test_solve_and_trace_roundtrip(tmp_path):
    out = str(tmp_path)
    assert main(["solve-absorption", "--dim", "2", "--shape", "disk",
                 "--h", "1/32", "--g", "power:2", "--boundary-atom", "1,0:1",
                 "--method", "newton", "--out", out]) == 0
    trace_csv = tmp_path / "trace.csv"
    assert main(["trace", "--solution", str(tmp_path / "u.csv"),
                 "--t-list", "0.1,0.05,0.025", "--g", "power:2",
                 "--out", str(trace_csv)]) == 0
    header = trace_csv.read_text().splitlines()[0]
    assert header == "b0,b1,density,verdict"


def test_csv_floats_have_17_digits(tmp_path):
    assert main(["run", "explicit-profiles", "--out", str(tmp_path)]) == 0
    body = (tmp_path / "explicit-profiles.csv").read_text().splitlines()
    # at least one field is a long-precision float
    assert any(len(tok.split(".")[-1].split("e")[0]) >= 10
               for tok in body[1].split(",") if "." in tok)
