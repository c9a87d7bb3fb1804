import json
import math
import os

import numpy as np
import pytest

from pillartune.cli import main
from pillartune.config import load_run_config
from pillartune.spectro import scan_from_csv, shift_law

FAST_DEVICE = """
[device]
mesh_edge_um = 2.5

[sweep]
va_start_v = 0.0
va_stop_v = 3.0
va_step_v = 1.0
vb_start_v = 0.0
vb_stop_v = 3.0
vb_step_v = 1.0
"""

CONSTRUCTED_ZERO = """
[device]
mesh_edge_um = 2.5

[exciton]
zero_field_splitting_uev = 0.0, 0.0
inplane_coupling_uev_m_per_v = 5e-2, 0.0, 0.0, 5e-2
vertical_coupling_uev_m_per_v = 0.0, 0.0
polarizability_uev_m2_per_v2 = 0.0

[sweep]
va_start_v = -1.0
va_stop_v = 1.0
va_step_v = 0.5
vb_start_v = -1.0
vb_stop_v = 1.0
vb_step_v = 0.5
"""

UNREACHABLE_ZERO = """
[device]
mesh_edge_um = 2.5

[exciton]
zero_field_splitting_uev = 40.0, 0.0
inplane_coupling_uev_m_per_v = 0.0, 0.0, 0.0, 0.0
vertical_coupling_uev_m_per_v = 0.0, 0.0

[sweep]
va_start_v = -1.0
va_stop_v = 1.0
va_step_v = 1.0
vb_start_v = -1.0
vb_stop_v = 1.0
vb_step_v = 1.0
"""


@pytest.fixture
def fast_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    path = tmp_path / "fast.cfg"
    path.write_text(FAST_DEVICE)
    return str(path)


def test_solve_equilibrium(fast_config, capsys):
    code = main(["--config", fast_config, "solve", "--va", "0", "--vb", "0",
                 "--vc", "0"])
    out = capsys.readouterr().out
    assert code == 0
    values = dict(
        line.split(" = ") for line in out.strip().splitlines() if " = " in line
    )
    assert float(values["i_a_a"]) == 0.0
    assert float(values["i_junction_a"]) == 0.0
    expected_ez = 1.4 / 270e-9
    assert float(values["ez_v_per_m"]) == pytest.approx(expected_ez)
    assert values["region"] == "1"


def test_solve_floating_terminal_region1(fast_config, capsys):
    code = main(["--config", fast_config, "solve", "--va", "-1", "--vb", "-0.3",
                 "--vc", "floating"])
    out = capsys.readouterr().out
    assert code == 0
    values = dict(
        line.split(" = ") for line in out.strip().splitlines() if " = " in line
    )
    assert values["vc_v"] == "floating"
    assert float(values["i_c_a"]) == 0.0
    assert values["region"] == "1"
    # field normal to the unconnected ridge C within 5 degrees
    cfg = load_run_config(fast_config)
    uc = np.array([
        math.cos(cfg.geometry.ridge_angles[2]),
        math.sin(cfg.geometry.ridge_angles[2]),
    ])
    e = np.array([float(values["ex_v_per_m"]), float(values["ey_v_per_m"])])
    e /= np.linalg.norm(e)
    assert abs(float(e @ uc)) <= math.sin(math.radians(5.0))


def test_solve_writes_potential(fast_config, tmp_path):
    out = tmp_path / "phi.csv"
    code = main(["--config", fast_config, "solve", "--va", "1", "--vb", "0",
                 "--phi-out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "node_id,phi_v"
    assert len(lines) > 100


def test_unknown_config_key_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[device]\nnot_a_key = 1\n")
    code = main(["--config", str(bad), "solve", "--va", "0", "--vb", "0"])
    assert code == 2
    assert "not_a_key" in capsys.readouterr().err


def test_sweep_outputs_are_deterministic(fast_config, tmp_path, capsys):
    cfg = load_run_config(fast_config)
    for prefix in ("one", "two"):
        assert main(["--config", fast_config, "sweep", "--out", prefix]) == 0
    capsys.readouterr()
    csv_a = (tmp_path / f"one_{cfg.config_hash}.csv").read_bytes()
    csv_b = (tmp_path / f"two_{cfg.config_hash}.csv").read_bytes()
    assert csv_a == csv_b
    assert main(["--config", fast_config, "sweep", "--out", "par", "--jobs", "3"]) == 0
    csv_c = (tmp_path / f"par_{cfg.config_hash}.csv").read_bytes()
    assert csv_c == csv_a
    rows = csv_a.decode().strip().splitlines()
    assert len(rows) == 1 + 16  # header + 4x4 grid
    meta = json.loads((tmp_path / f"one_{cfg.config_hash}.meta.json").read_text())
    assert meta["config_hash"] == cfg.config_hash
    assert meta["grid"] == [4, 4]


def test_synth_scan_then_fit_round_trip(fast_config, tmp_path, capsys):
    scan_path = tmp_path / "scan.csv"
    # linewidth far above the splitting keeps the apparent-peak law on the
    # pure sinusoid, so the fit recovers the true splitting tightly
    code = main([
        "--config", fast_config, "synth-scan", "--va", "-1", "--vb", "-1",
        "--noise", "0", "--n-angles", "24", "--linewidth", "1000",
        "--out", str(scan_path),
    ])
    assert code == 0
    truth_line = [
        line for line in capsys.readouterr().out.splitlines() if "true fss" in line
    ][0]
    truth = float(truth_line.split("=")[1].split("ueV")[0])
    fit_path = tmp_path / "fit.json"
    code = main(["--config", fast_config, "fit", str(scan_path),
                 "--out", str(fit_path)])
    assert code == 0
    payload = json.loads(fit_path.read_text())
    assert payload["delta_fss_uev"] == pytest.approx(truth, rel=1e-3)
    assert "config_hash" in payload


def test_fit_recovers_handwritten_sinusoid(fast_config, tmp_path, capsys):
    angles = np.arange(36) * math.pi / 36
    energies = shift_law(angles, 10.0, 0.5, 1.0)
    path = tmp_path / "sine.csv"
    with open(path, "w") as fh:
        fh.write("angle_rad,energy_ueV,sigma_ueV\n")
        for a, e in zip(angles, energies):
            fh.write(f"{float(a)!r},{float(e)!r},0.0\n")
    code = main(["--config", fast_config, "fit", str(path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "delta_fss = 10" in out


def test_fit_rejects_short_scan(fast_config, tmp_path, capsys):
    path = tmp_path / "short.csv"
    with open(path, "w") as fh:
        fh.write("angle_rad,energy_ueV,sigma_ueV\n")
        for k in range(5):
            fh.write(f"{k * 0.6},1.0,0.1\n")
    code = main(["--config", fast_config, "fit", str(path)])
    assert code == 2
    assert "6" in capsys.readouterr().err


def test_tune_constructed_zero_converges(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    cfg_path = tmp_path / "zero.cfg"
    cfg_path.write_text(CONSTRUCTED_ZERO)
    out = tmp_path / "tune.json"
    code = main(["--config", str(cfg_path), "tune", "--tol", "0.1",
                 "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["converged"] is True
    assert payload["achieved_fss_uev"] < 0.1


def test_tune_nonconvergence_exits_5_with_report(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    cfg_path = tmp_path / "stuck.cfg"
    cfg_path.write_text(UNREACHABLE_ZERO)
    out = tmp_path / "tune.json"
    code = main(["--config", str(cfg_path), "tune", "--tol", "1.5",
                 "--out", str(out)])
    assert code == 5
    payload = json.loads(out.read_text())
    assert payload["converged"] is False
    assert payload["achieved_fss_uev"] == pytest.approx(40.0, rel=1e-6)


def test_iso_fss_from_sweep_csv(fast_config, tmp_path, capsys):
    cfg = load_run_config(fast_config)
    assert main(["--config", fast_config, "sweep", "--out", "map"]) == 0
    sweep_csv = tmp_path / f"map_{cfg.config_hash}.csv"
    out = tmp_path / "iso.json"
    code = main([
        "--config", fast_config, "iso-fss", "--target", "5.0",
        "--min-separation", "1.0", "--sweep-csv", str(sweep_csv),
        "--out", str(out),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["n_pairs"] == len(payload["pairs"])


def test_scan_csv_written_by_cli_parses(fast_config, tmp_path):
    scan_path = tmp_path / "s.csv"
    assert main([
        "--config", fast_config, "synth-scan", "--va", "0", "--vb", "0",
        "--noise", "0.2", "--seed", "7", "--out", str(scan_path),
    ]) == 0
    scan = scan_from_csv(str(scan_path))
    assert len(scan.angles) == 36
