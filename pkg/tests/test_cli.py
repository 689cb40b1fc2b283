import csv

import numpy as np
import pytest

from cldamage import grid as g
from cldamage.cli import main, parse_config
from cldamage.errors import ParseError, ValidationError
from cldamage.material import ModelParams
from cldamage.minimizer import MinimizerConfig

BENCH = """\
[grid]
cells = 32
gamma_faces = x-, x+

[run]
horizon = 1.0
steps = 4
c0 = cosine 0.01 1
z0 = constant 1
load = stretch
load_times = 0, 0.5, 1
load_amplitudes = 0, 0.3, 0.4
"""

STATIONARY = """\
[grid]
cells = 16

[model]
eigenstrain_slope = 0

[run]
horizon = 1.0
steps = 3
c0 = constant 0.2
"""


def _write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------ parse_config


def test_minimal_config_applies_defaults():
    parsed = parse_config("[grid]\ncells = 8\n[run]\nhorizon = 2\n")
    assert parsed.params == ModelParams()
    assert parsed.minimizer == MinimizerConfig()
    assert parsed.run.steps == 16 and parsed.run.horizon == 2.0
    assert np.all(parsed.run.c0 == 0) and np.all(parsed.run.z0 == 1)
    assert parsed.run.grid.gamma_faces == ("x-",)
    assert parsed.eps == [1.0, 0.5, 0.25, 0.125, 0.0625]
    assert parsed.m_list == [8, 16, 32, 64]


def test_p_not_above_dimension():
    with pytest.raises(ValidationError, match="p > n"):
        parse_config("[grid]\ncells = 4 4\n[model]\np = 1\n[run]\nhorizon = 1\n")


def test_initial_damage_file_out_of_range(tmp_path):
    grid = g.GridSpec.uniform((5,))
    z = np.array([1.0, 0.5, 1.2, 0.9, 1.0])
    g.write_snapshot(tmp_path / "z0.txt", z, grid, "z0")
    text = "[grid]\ncells = 5\n[run]\nhorizon = 1\nz0 = file z0.txt\n"
    with pytest.raises(ValidationError, match="0 <= z0 <= 1"):
        parse_config(text, base_dir=str(tmp_path))


def test_initial_field_file_is_read(tmp_path):
    grid = g.GridSpec.uniform((5,))
    c = np.linspace(-0.1, 0.1, 5)
    g.write_snapshot(tmp_path / "c0.txt", c, grid, "c0")
    parsed = parse_config(
        "[grid]\ncells = 5\n[run]\nhorizon = 1\nc0 = file c0.txt\n", base_dir=str(tmp_path)
    )
    assert np.allclose(parsed.run.c0, c)


@pytest.mark.parametrize(
    "text, line",
    [
        ("[grid]\ncells = 4\n[run]\nhorizon = 1\nsteps = many\n", 5),
        ("[grid]\ncells = 4\ncolour = red\n[run]\nhorizon = 1\n", 3),
        ("[grid]\ncells = 4\n[run]\nhorizon = 1\n[extras]\nx = 1\n", 5),
        ("cells = 4\n", 1),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        parse_config(text)
    assert info.value.lineno == line
    assert str(info.value).startswith(f"line {line}: ")


def test_missing_required_key():
    with pytest.raises(ParseError, match="horizon"):
        parse_config("[grid]\ncells = 4\n")


def test_random_preset_uses_seed():
    text = "[grid]\ncells = 8\n[run]\nhorizon = 1\nc0 = random 0.1\n"
    a = parse_config(text, seed=1).run.c0
    b = parse_config(text, seed=1).run.c0
    c = parse_config(text, seed=2).run.c0
    assert np.array_equal(a, b) and not np.array_equal(a, c)


# ----------------------------------------------------------- subcommands


def test_run_stationary_writes_constant_energy(tmp_path):
    cfg = _write(tmp_path, STATIONARY)
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out), "--snapshot-stride", "1"]) == 0
    rows = _read_csv(out / "diagnostics.csv")
    totals = {r["total"] for r in rows}
    assert len(rows) == 4 and len(totals) == 1
    assert (out / "trajectory.npz").exists() and (out / "config.ini").exists()
    values, header = g.read_snapshot(out / "snapshots" / "c_00003.txt")
    assert header["name"] == "c" and np.allclose(values, 0.2)


def test_sweep_writes_blocks(tmp_path, capsys):
    cfg = _write(tmp_path, BENCH)
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--eps", "1,0.5,0.25"]) == 0
    rows = _read_csv(out / "sweep.csv")
    assert [float(r["eps"]) for r in rows] == [1.0, 0.5, 0.25]
    assert len(list(out.glob("diagnostics_eps_*.csv"))) == 3
    printed = capsys.readouterr().out
    assert "false" not in printed and printed.count("true") == 9


def test_refine_writes_table(tmp_path):
    cfg = _write(tmp_path, BENCH)
    out = tmp_path / "refine"
    assert main(["refine", "--config", cfg, "--out", str(out), "--m-list", "4,8"]) == 0
    rows = _read_csv(out / "refine.csv")
    assert [int(r["steps"]) for r in rows] == [4, 8]


def test_verify_passes_on_converged_run(tmp_path):
    cfg = _write(tmp_path, BENCH)
    out = tmp_path / "good"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    assert main(["verify", "--out", str(out)]) == 0
    text = (out / "report.txt").read_text()
    assert "passed=true" in text


def test_verify_flags_truncated_run(tmp_path):
    cfg = _write(
        tmp_path,
        BENCH + "\n[minimizer]\nmax_outer = 1\nmax_inner = 1\naccept_unconverged = true\n",
    )
    out = tmp_path / "bad"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 4
    assert "passed=false" in (out / "report.txt").read_text()


def test_exit_codes_for_invalid_input_and_step_failure(tmp_path):
    bad = _write(tmp_path, "[grid]\ncells = 4 4\n[model]\np = 2\n[run]\nhorizon = 1\n", "bad.ini")
    assert main(["run", "--config", bad, "--out", str(tmp_path / "x")]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "y")]) == 2
    assert main(["run", "--out", str(tmp_path / "z")]) == 2
    failing = _write(tmp_path, BENCH + "\n[minimizer]\nmax_outer = 1\nmax_inner = 1\n", "fail.ini")
    out = tmp_path / "fail"
    assert main(["run", "--config", failing, "--out", str(out)]) == 3
    assert (out / "diagnostics.csv").exists()


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, BENCH)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(a), "--seed", "3"]) == 0
    assert main(["run", "--config", cfg, "--out", str(b), "--seed", "3"]) == 0
    assert (a / "diagnostics.csv").read_bytes() == (b / "diagnostics.csv").read_bytes()
