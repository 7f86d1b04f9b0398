import json
from pathlib import Path

import pytest

from cmlab import cli_harness as cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text)
    return p


def test_malformed_config_exits_2(tmp_path, capsys):
    p = write(tmp_path, 'mode = "ode"\n[ode\n')
    assert cli.main(["ode", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "malformed" in capsys.readouterr().err


def test_unknown_key_exits_2(tmp_path):
    p = write(tmp_path, 'mode = "ode"\nbanana = 1\n')
    assert cli.main(["ode", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_mode_mismatch_and_missing_section(tmp_path):
    p = write(tmp_path, 'mode = "ode"\n')
    with pytest.raises(cli.ConfigError):
        cli.load_config(p, mode="evolve")
    p = write(tmp_path, 'mode = "evolve"\n[grid]\nn = 256\n')
    with pytest.raises(cli.ConfigError):
        cli.load_config(p)
    with pytest.raises(cli.ConfigError):
        cli.load_config(tmp_path / "missing.toml")


def test_bad_value_exits_2(tmp_path):
    p = write(tmp_path, 'mode = "evolve"\n[grid]\nn = 256\nbox_len = 32.0\n'
              '[init]\nL = 1\n[evolve]\ndt0 = -1.0\n')
    assert cli.main(["evolve", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_ode_mode_runs(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["ode", "--config", str(CONFIGS / "ode_exactness.toml"), "--out", str(out)]) == 0
    assert "ode_exactness: PASS" in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pass"] and summary["error"] is None
    assert (out / "ode_exactness.csv").exists()


def test_seed_override_changes_hash(tmp_path):
    a = cli.load_config(CONFIGS / "ode_exactness.toml", seed=1)
    b = cli.load_config(CONFIGS / "ode_exactness.toml", seed=2)
    assert a.digest() != b.digest()
    assert a.digest() == cli.load_config(CONFIGS / "ode_exactness.toml", seed=1).digest()


def test_outputs_are_byte_identical(tmp_path):
    cfg = CONFIGS / "special_rate.toml"
    for name in ("a", "b"):
        cli.main(["ode", "--config", str(cfg), "--out", str(tmp_path / name)])
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_thread_count_does_not_change_results(tmp_path, monkeypatch):
    cfg = CONFIGS / "operator_identities.toml"
    monkeypatch.setenv("CMLAB_THREADS", "1")
    cli.main(["verify-identities", "--config", str(cfg), "--out", str(tmp_path / "one")])
    monkeypatch.setenv("CMLAB_THREADS", "4")
    cli.main(["verify-identities", "--config", str(cfg), "--out", str(tmp_path / "four")])
    for f in ("summary.json", "identities.csv"):
        assert (tmp_path / "one" / f).read_bytes() == (tmp_path / "four" / f).read_bytes()


def test_check_kinds():
    assert cli.check("a", 1.0, 2.0)["pass"]
    assert not cli.check("a", 1.0, 2.0, "min")["pass"]
    assert cli.check("a", 1.0, [0.5, 1.5], "range")["pass"]
    assert not cli.check("a", float("nan"), 2.0)["pass"]
    assert not cli.criterion([])["pass"]


def test_csv_and_svg_writers(tmp_path):
    cli.write_csv(tmp_path / "t.csv", [{"x": 0.1, "y": 2}, {"x": 1e-20, "y": 3}])
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "x,y"
    cli.write_svg(tmp_path / "f.svg", {"c": ([1, 2, 3], [1, 4, 9])}, "x", "y", logy=True)
    a = (tmp_path / "f.svg").read_bytes()
    cli.write_svg(tmp_path / "g.svg", {"c": ([1, 2, 3], [1, 4, 9])}, "x", "y", logy=True)
    assert a.startswith(b"<?xml") and a == (tmp_path / "g.svg").read_bytes()
