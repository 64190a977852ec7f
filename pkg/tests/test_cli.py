import json

import pytest

from fracmil.cli import main
from fracmil.config import load_config, parse_config
from fracmil.mc import ConfigError

BASE = """
sigma = "{sigma}"
H = {H}
n = {n}
paths = 4
seed = 11
[scheme]
m = {m}
"""


def _cfg(tmp_path, sigma="2+sin(x)", H=0.7, n="[32, 64, 128]", m=0, extra=""):
    path = tmp_path / "run.toml"
    path.write_text(BASE.format(sigma=sigma, H=H, n=n, m=m) + extra)
    return str(path)


def test_ncweights(capsys):
    assert main(["ncweights", "1"]) == 0
    assert main(["ncweights", "0"]) == 0
    assert main(["ncweights", "2"]) == 0
    assert capsys.readouterr().out.splitlines() == [
        "0: 1/2, 1: 1/2", "0: 1", "0: 1/6, 1/2: 2/3, 1: 1/6"]
    assert main(["ncweights", "-1"]) == 2


def test_missing_config(tmp_path, capsys):
    missing = tmp_path / "nope.toml"
    assert main(["simulate", "--config", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_simulate(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert main(["simulate", "--config", _cfg(tmp_path, n=4), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "t,approx,exact,abs_error" and len(rows) == 6
    assert main(["simulate", "--config", _cfg(tmp_path, sigma="2", n=64, m=2)]) == 0
    lines = capsys.readouterr().out.splitlines()[1:]
    assert max(float(r.split(",")[3]) for r in lines) <= 1e-10


def test_inadmissible_h(tmp_path, capsys):
    assert main(["rates", "--config", _cfg(tmp_path, H=0.3), "--out", str(tmp_path / "o")]) == 2
    assert "1/(m+2) < H < 1" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_schema_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config({"sigma": "2", "H": 0.7, "n": 4, "paths": 1, "seed": 1, "bogus": 1})
    with pytest.raises(ConfigError, match="missing"):
        parse_config({"sigma": "2", "H": 0.7})
    with pytest.raises(ConfigError, match="wrong type"):
        parse_config({"sigma": "2", "H": "0.7", "n": 4, "paths": 1, "seed": 1})
    with pytest.raises(ConfigError, match="offset"):
        parse_config({"sigma": "2+", "H": 0.7, "n": 4, "paths": 1, "seed": 1})
    bad = tmp_path / "bad.toml"
    bad.write_text("sigma = ")
    assert main(["rates", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_seed_override(tmp_path):
    assert load_config(_cfg(tmp_path), seed=99).experiment.seed == 99
    assert load_config(_cfg(tmp_path)).experiment.seed == 11


def test_rates_deterministic(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["rates", "--config", cfg, "--out", str(a), "--threads", "1"]) == 0
    assert main(["rates", "--config", cfg, "--out", str(b), "--threads", "2"]) == 0
    ja, jb = (json.loads((d / "report.json").read_text()) for d in (a, b))
    ja["metadata"].pop("wall_time_s"), jb["metadata"].pop("wall_time_s")
    assert ja == jb
    assert (a / "paths.csv").read_bytes() == (b / "paths.csv").read_bytes()
    assert [s["n"] for s in ja["summaries"]] == [32, 64, 128]


def test_report_renders(tmp_path, capsys):
    out = tmp_path / "rep"
    assert main(["report", "--config", _cfg(tmp_path), "--out", str(out)]) == 0
    for name in ("report.json", "paths.csv", "summary.csv", "rates.png",
                 "deviations.png", "plot_report.py"):
        assert (out / name).is_file()
    again = tmp_path / "again"
    assert main(["report", "--from", str(out), "--out", str(again)]) == 0
    assert (again / "rates.png").is_file()
    assert main(["report", "--from", str(tmp_path / "none"), "--out", str(again)]) == 2


def test_powervar_command(tmp_path, capsys):
    extra = '[powervar]\nweight = "2+cos(x)"\nkappa = 2\n'
    out = tmp_path / "pv"
    assert main(["powervar", "--config", _cfg(tmp_path, extra=extra), "--out", str(out)]) == 0
    assert (out / "powervar.json").is_file()
    assert main(["powervar", "--config", _cfg(tmp_path), "--out", str(out)]) == 2
