"""CLI driver: config round-trip, error exits, deterministic reruns."""

import numpy as np

from fitdg.cli import ConfigError, main, parse_config, serialize_config

import pytest


def test_parse_serialize_round_trip():
    cfg = parse_config("scenario = case3\nlevels = 3\ndt = 0.05\n"
                       "delta = auto\nmarking = cells\n")
    again = parse_config(serialize_config(cfg))
    assert again == cfg


def test_defaults_and_comments():
    cfg = parse_config("# just a comment\n\nlevels = 4   # trailing\n")
    assert cfg["levels"] == 4
    assert cfg["scenario"] == "case1"
    assert cfg["dt"] == 0.01


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config("levles = 4\n")
    with pytest.raises(ConfigError):
        parse_config("scenario = case9\n")
    with pytest.raises(ConfigError):
        parse_config("dt = -1\n")


def test_unknown_key_exit_code(tmp_path, capsys):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("levles = 4\n")
    assert main(["run", str(cfgfile)]) == 2
    assert "unknown config key" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path):
    assert main(["run", str(tmp_path / "nope.cfg")]) == 2


def test_solver_failure_exit_code(tmp_path, capsys):
    # a domain with zero area makes the setup blow up -> exit 3
    cfgfile = tmp_path / "bad_domain.cfg"
    cfgfile.write_text("scenario = case1\ndomain = 0,0,0,1\nlevels = 1\n"
                       f"T = 0.02\ndt = 0.01\noutput_dir = {tmp_path}/o\n")
    assert main(["run", str(cfgfile)]) == 3
    assert "solver failure" in capsys.readouterr().err


def _run(tmp_path, name, extra=""):
    cfgfile = tmp_path / f"{name}.cfg"
    out = tmp_path / name
    cfgfile.write_text("scenario = case1\nlevels = 2\neps = 0.01\n"
                       f"dt = 0.05\nT = 0.2\noutput_dir = {out}\n" + extra)
    assert main(["run", str(cfgfile)]) == 0
    return (out / "estimator.csv").read_bytes()


def test_rerun_byte_identical(tmp_path):
    a = _run(tmp_path, "a")
    b = _run(tmp_path, "b")
    assert a == b


def test_case1_zero_delta_zero_exponent(tmp_path):
    data = _run(tmp_path, "c").decode()
    lines = [ln for ln in data.splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    col = header.index("exponent")
    for ln in lines[1:]:
        assert float(ln.split(",")[col]) == 0.0


def test_cli_overrides(tmp_path):
    cfgfile = tmp_path / "ov.cfg"
    out = tmp_path / "ov"
    cfgfile.write_text("scenario = case1\nlevels = 5\ndt = 0.05\nT = 1.0\n"
                       f"eps = 0.01\noutput_dir = {out}\n")
    assert main(["run", str(cfgfile), "--levels", "1", "--until", "0.1"]) == 0
    rows = [ln for ln in (out / "estimator.csv").read_text().splitlines()
            if ln and not ln.startswith("#")]
    assert len(rows) == 1 + 2                 # header + 2 steps of 0.05
    assert rows[-1].split(",")[3] == "4"      # n_cells at levels = 1
