import csv
import io
import math
import subprocess
import sys

import numpy as np
import pytest

from flockfp.cli import main, read_trajectory
from flockfp.config import ConfigError, parse_config

FAST_SIM = ["--set", "solver.n=200", "--set", "solver.t_end=0.2", "--set", "solver.output_stride=20"]


def _rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.reader(lines))


def _comments(path):
    return [l for l in path.read_text().splitlines() if l.startswith("#")]


def test_config_parsing_is_strict():
    cfg = parse_config("model.alpha = 4.0  # comment\nseed=3\n", ["model.d=2"])
    assert cfg["model.alpha"] == 4.0 and cfg["seed"] == 3 and cfg["model.d"] == 2
    for bad in ["model.bogus = 1", "model.d = 1.5", "model.alpha = nan", "solver.coupling = rk4",
                "model.alpha 4"]:
        with pytest.raises(ConfigError):
            parse_config(bad)


def test_exit_codes(tmp_path, capsys):
    assert main(["phase", "--set", "model.bogus=1"]) == 2
    assert main(["phase", "--set", "model.d=x"]) == 2
    assert main(["nosuchcommand"]) == 2
    assert main(["phase", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["rates"]) == 2
    assert main(["phase", "--set", "model.D=-1"]) == 2
    # a CFL blow-up is a numerical failure
    assert main(["simulate", "--set", "solver.dt=50", "--set", "solver.t_end=100",
                 "--set", "solver.n=100"]) == 3
    capsys.readouterr()


def test_phase_table_and_determinism(tmp_path):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["phase", "--set", "phase.D_rel_values=0.6,0.9,1.0,1.3", "--set", "phase.coercivity=yes"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    rows = _rows(out1)
    head = rows[0]
    assert head[:4] == ["D", "D_rel", "regime", "r_D"]
    data = {float(r[1]): dict(zip(head, r)) for r in rows[1:]}
    assert data[0.6]["regime"] == "polarized" and float(data[0.6]["r_D"]) > 0
    assert float(data[0.6]["V_second_rD"]) > 0
    above = data[1.3]
    assert above["r_D"] == "" and above["kappa"] == "" and above["beta"] == ""
    assert data[1.0]["V_fourth_0"] != ""
    com = _comments(out1)
    assert any(c.startswith("# flockfp ") for c in com)
    assert any(c.startswith("# config_sha256 = ") for c in com)
    assert any(c.startswith("# quad.rel_tol = ") for c in com)


def test_simulate_single_row_and_roundtrip(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["simulate", "--set", "solver.t_end=0", "--set", "solver.n=200",
                 "--out", str(out)]) == 0
    assert len(_rows(out)) == 2
    # re-run from the effective config embedded in the output
    cfg_text = "".join(c[len("# config: "):] + "\n" for c in _comments(out)
                       if c.startswith("# config: "))
    cfg_file = tmp_path / "eff.cfg"
    cfg_file.write_text(cfg_text)
    out2 = tmp_path / "s2.csv"
    assert main(["simulate", "--config", str(cfg_file), "--out", str(out2)]) == 0
    assert out.read_bytes() == out2.read_bytes()


def test_simulate_columns_and_decay(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["simulate", "--out", str(out)] + FAST_SIM) == 0
    cfg, header, data = read_trajectory(str(out))
    expected = (["t", "F", "F_gap", "H_rel_star", "H_rel_inf", "I", "uf_1", "dist_S", "Q1"]
                + [f"M{k}" for k in range(9)] + ["res_eq6", "res_eq7", "res_eq8", "res_debruijn"])
    assert header == expected
    assert data.shape[1] == len(expected) and data.shape[0] >= 5
    F = data[:, 1]
    assert np.all(np.diff(F) <= 1e-12)
    assert np.all(np.abs(data[:, header.index("res_eq6")]) < 1e-8)
    assert math.isnan(data[0, header.index("res_debruijn")])
    assert cfg["solver.n"] == 200 and cfg.is_set("model.D")
    com = _comments(out)
    assert "# init.admissible = True" in com
    assert any(c.startswith("# u_inf = ") for c in com)


def test_stationary_start_gives_flat_columns(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["simulate", "--set", "init.eps=0", "--out", str(out)] + FAST_SIM) == 0
    _, header, data = read_trajectory(str(out))
    for name in ("F", "uf_1", "M2", "M4"):
        col = data[:, header.index(name)]
        assert np.ptp(col) <= 1e-12 * max(1.0, np.abs(col).max()), name


def _synthetic(tmp_path, rate=3.0):
    traj = tmp_path / "syn.csv"
    t = np.linspace(0, 5, 501)
    with open(traj, "w") as fh:
        fh.write("t,Q1\n")
        for ti in t:
            fh.write(f"{float(ti)!r},{math.exp(-rate * ti)!r}\n")
    return traj


def test_rates_synthetic_exponential(tmp_path):
    traj = _synthetic(tmp_path)
    out = tmp_path / "r.csv"
    assert main(["rates", "--set", f"rates.input={traj}", "--out", str(out)]) == 0
    rows = _rows(out)
    q1 = [r for r in rows[1:] if r[0] == "Q1" and r[1] == "exponential"][0]
    assert abs(float(q1[3]) - 3.0) <= 1e-6


def test_rates_on_simulated_trajectory(tmp_path):
    traj = tmp_path / "s.csv"
    assert main(["simulate", "--set", "solver.n=200", "--set", "solver.t_end_scaled=30",
                 "--set", "solver.output_stride=200", "--out", str(traj)]) == 0
    out = tmp_path / "r.csv"
    assert main(["rates", "--set", f"rates.input={traj}", "--set", "rates.min_points=10",
                 "--out", str(out)]) == 0
    com = _comments(out)
    assert "# regime = polarized" in com
    two_b2 = float([c for c in com if c.startswith("# two_beta_sq")][0].split("=")[1])
    rows = {(r[0], r[1]): r for r in _rows(out)[1:]}
    assert float(rows[("Q1", "exponential")][3]) >= 0.9 * two_b2


def test_rates_above_threshold_are_labelled(tmp_path):
    traj = tmp_path / "s.csv"
    assert main(["simulate", "--set", "model.D_rel=1.2", "--set", "solver.n=200",
                 "--set", "solver.t_end_scaled=10", "--set", "solver.output_stride=100",
                 "--set", "init.u0=0.5", "--out", str(traj)]) == 0
    out = tmp_path / "r.csv"
    assert main(["rates", "--set", f"rates.input={traj}", "--set", "rates.min_points=5",
                 "--out", str(out)]) == 0
    rows = _rows(out)[1:]
    assert all(r[2] == "isotropic" for r in rows)
    fits = {(r[0], r[1]) for r in rows}
    assert ("H_rel_star", "exponential") in fits and ("F_gap", "algebraic") in fits


def test_linearize_report(tmp_path):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["linearize", "--set", "linearize.n_samples=10", "--set", "linearize.n=200"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    vals = {r[0]: r[1] for r in _rows(out1)[1:]}
    for k in ("B_D", "K_D", "A_D", "gamma", "kappa", "eta", "beta"):
        assert float(vals[k]) > 0
    for k, v in vals.items():
        if k.startswith("violations_"):
            assert v == "0", k


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "flockfp", "--version"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and res.stdout.startswith("flockfp ")
