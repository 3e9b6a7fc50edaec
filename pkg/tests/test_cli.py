import csv
import io
import subprocess
import sys
from fractions import Fraction

import pytest

from kmat import cli
from kmat.channel import ConfigError
from kmat.dof import dof_outer_sum


def _run(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _table(out):
    lines = [line for line in out.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def _comments(out):
    return dict(line[2:].split(": ", 1) for line in out.splitlines() if line.startswith("# ") and ": " in line)


def test_parse_grid():
    assert cli.parse_grid("0:1:0.25") == [Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1)]
    assert cli.parse_grid("2:5", "int") == [2, 3, 4, 5]
    assert cli.parse_grid("1/3,1/2") == [Fraction(1, 3), Fraction(1, 2)]
    assert cli.parse_grid("20:60:10", "float") == [20.0, 30.0, 40.0, 50.0, 60.0]
    for bad in ("1:0", "0:1:0", "a:b", "", "0:1:2:3"):
        with pytest.raises(ConfigError):
            cli.parse_grid(bad)
    with pytest.raises(ConfigError):
        cli.parse_grid("0:1:0.5", "int")


def test_ledger_k3_paper(capsys):
    code, out, _ = _run(capsys, "ledger", "--k", "3", "--n", "2", "--variant", "k3-paper")
    assert code == 0
    meta = _comments(out)
    assert meta["dof"] == "10/7"
    assert meta["order1_symbols"] == "30" and meta["slots"] == "21"
    rows = _table(out)
    assert sum(int(r["slots"]) for r in rows) == 21


def test_figure3(capsys):
    code, out, _ = _run(capsys, "figures", "--fig", "3", "--k", "5", "--alpha", "0:1:0.05")
    assert code == 0
    rows = _table(out)
    assert list(rows[0]) == ["alpha", "scheme", "dof", "dof_float"]
    assert len(rows) == 21 * 4
    got = {(r["alpha"], r["scheme"]): r["dof"] for r in rows}
    assert got[("0", "KMAT")] == "5/3"
    assert got[("0", "MAT")] == got[("0", "OUTER")] == "300/137"
    assert got[("1", "KMAT")] == "5"


def test_figure4_and_2(capsys):
    _, out, _ = _run(capsys, "figures", "--fig", "4")
    got = {(r["K"], r["scheme"]): Fraction(r["dof"]) for r in _table(out)}
    assert got[("5", "KMAT")] == Fraction(10, 3)
    assert got[("5", "ZF")] == Fraction(5, 2)
    assert got[("5", "MAT")] == Fraction(300, 137)
    _, out, _ = _run(capsys, "figures", "--fig", "2")
    got = {(r["K"], r["scheme"]): Fraction(r["dof"]) for r in _table(out)}
    assert got[("2", "MAT")] == got[("2", "ALTMAT")] == Fraction(4, 3)


def test_every_row_below_outer(capsys):
    _, out, _ = _run(capsys, "formulas", "--k", "2:6", "--alpha", "0:1:0.1")
    for r in _table(out):
        val = Fraction(int(r["dof_num"]), int(r["dof_den"]))
        assert val <= dof_outer_sum(int(r["K"]), Fraction(r["alpha"]))


def test_region_membership(capsys):
    code, out, _ = _run(capsys, "region", "--k", "2", "--alpha", "0", "--point", "1,1")
    assert code == 0
    rows = {r["quantity"]: r["value"] for r in _table(out)}
    assert rows["member"] == "false"
    assert rows["lp_value"] == "4/3" and rows["certified"] == "true"


def test_region_constraints_export(capsys):
    _, out, _ = _run(capsys, "region", "--k", "3", "--alpha", "0", "--constraints")
    rows = _table(out)
    assert sum(r["p"] != "1" for r in rows) == 12


def test_byte_identical_output(capsys):
    argv = ["simulate", "--mode", "power", "--trials", "100", "--snr", "20:50:10", "--seed", "7"]
    _, a, _ = _run(capsys, *argv)
    _, b, _ = _run(capsys, *argv)
    _, c, _ = _run(capsys, *argv, "--jobs", "3")
    assert a == b == c
    _, d, _ = _run(capsys, *argv[:-1], "8")
    assert d != a


def test_bounds_jobs_identical(capsys):
    argv = ["bounds", "--trials", "100", "--instances", "3"]
    _, a, _ = _run(capsys, *argv)
    _, b, _ = _run(capsys, *argv, "--jobs", "3")
    assert a == b
    assert _comments(a)["verdict"] == "PASS"


@pytest.mark.parametrize("mode", ["decode", "zf", "distortion"])
def test_simulate_modes(capsys, mode):
    code, out, _ = _run(capsys, "simulate", "--mode", mode, "--trials", "100", "--snr", "30:60:10")
    assert code == 0
    assert _table(out)


def test_header_has_resolved_config(capsys):
    _, out, _ = _run(capsys, "simulate", "--trials", "60", "--snr", "20:50:10")
    cfg = next(line for line in out.splitlines() if line.startswith("# config:"))
    assert "None" not in cfg and "m=3" in cfg
    assert "# seed: 2024" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["bogus"],
        ["ledger", "--k", "x"],
        ["ledger", "--unknown"],
        ["figures", "--fig", "5"],
        ["figures", "--alpha", "1:0"],
        ["simulate", "--alpha", "1.5"],
        ["simulate", "--snr", "20:30:10"],
        ["region", "--k", "2", "--point", "1"],
        ["bounds", "--dims", "3,2"],
        ["ledger", "--k", "2", "--variant", "k3-paper"],
    ],
)
def test_validation_exit_2(capsys, argv):
    code, _, err = _run(capsys, *argv)
    assert code == 2
    assert err.startswith("kmat: error:")


def test_internal_error_exit_1(capsys, monkeypatch):
    def boom(args):
        raise RuntimeError("boom")

    monkeypatch.setitem(cli.COMMANDS, "ledger", boom)
    code, _, err = _run(capsys, "ledger")
    assert code == 1 and "internal error" in err


def test_config_file_and_flag_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# ledger settings\nk = 3\nn = 5\nvariant = k3-paper\n")
    _, out, _ = _run(capsys, "ledger", "--config", str(cfg))
    assert _comments(out)["dof"] == str(Fraction(12 + 45, 9 + 30))
    _, out, _ = _run(capsys, "ledger", "--config", str(cfg), "--n", "2")
    assert _comments(out)["dof"] == "10/7"
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert _run(capsys, "ledger", "--config", str(bad))[0] == 2
    assert _run(capsys, "ledger", "--config", str(tmp_path / "missing.cfg"))[0] == 2


def test_out_dir_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path))
    code, out, _ = _run(capsys, "figures", "--fig", "2")
    assert code == 0 and out == ""
    text = (tmp_path / "figures.csv").read_text()
    assert text.startswith("# kmat figures")
    target = tmp_path / "sub" / "x.csv"
    _run(capsys, "figures", "--fig", "2", "--out", str(target))
    assert target.read_text() == text


def test_selftest(capsys):
    code, out, _ = _run(capsys, "selftest")
    assert code == 0
    assert all(r["status"] == "PASS" for r in _table(out))


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "kmat", "ledger", "--k", "3", "--n", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("# kmat ledger")
