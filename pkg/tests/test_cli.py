import csv
import json
import subprocess
import sys

import pytest

from holodyn.cli import main

from conftest import CONFIG_DIR


@pytest.fixture
def write_config(tmp_path):
    def write(text, name="config.yaml"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


def test_run_zero_model(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["run", str(CONFIG_DIR / "zero.yaml"), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["scalars"]["factorization"] <= 1e-12
    assert report["scalars"]["circularity_eq4"] <= 1e-12
    assert max(report["series"]["ode"]) <= 1e-12
    assert max(report["series"]["identity_eq3"]) <= 1e-12
    assert report["config"]["model"]["name"] == "zero"
    assert set(report) >= {"version", "seed", "wall_time_s", "convergence", "isometry_defect_holonomy"}


def test_run_spin_to_stdout(capsys):
    assert main(["run", str(CONFIG_DIR / "spin_half_rotating.yaml")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["scalars"]["circularity_eq4"] <= 1e-12
    assert all(report["tier1"].values())


def test_steps_zero_exit_2(write_config, capsys):
    path = write_config("{model: zero, dim: 2, t_final: 1, steps: 0, frame: [0]}")
    assert main(["run", path]) == 2
    assert "steps" in capsys.readouterr().err


def test_missing_file_exit_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 2


def test_tier1_failure_exit_1(write_config, capsys):
    # an identity tolerance below the rounding floor cannot be met
    text = (CONFIG_DIR / "random_smooth.yaml").read_text().replace(
        "flags:", "tolerances: {identity: 1.0e-30}\n  flags:")
    assert main(["run", write_config(text)]) == 1


def test_propagation_error_exit_3(write_config, monkeypatch, capsys):
    import holodyn.cli as cli
    from holodyn.errors import PropagationError

    def boom(*args, **kwargs):
        raise PropagationError("reorthonormalization failed", 0.5)

    monkeypatch.setattr(cli, "evolve_frames", boom)
    assert main(["run", str(CONFIG_DIR / "zero.yaml")]) == 3
    assert "t = 0.5" in capsys.readouterr().err


def test_seed_env_override(monkeypatch, capsys):
    monkeypatch.setenv("HOLODYN_SEED", "11")
    assert main(["run", str(CONFIG_DIR / "random_smooth.yaml")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["seed"] == 11
    monkeypatch.setenv("HOLODYN_SEED", "eleven")
    assert main(["run", str(CONFIG_DIR / "random_smooth.yaml")]) == 2


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_convergence_zero(tmp_path):
    out = tmp_path / "zero.csv"
    assert main(["convergence", str(CONFIG_DIR / "zero.yaml"), "--halvings", "2", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert len(rows) == 3
    for row in rows:
        assert float(row["res_factorization"]) <= 1e-12
        assert float(row["res_ode_max"]) <= 1e-12
        assert row["fitted_order_fact"] == "exact"
        assert row["fitted_order_ode"] == "exact"
    assert json.loads((tmp_path / "zero.csv.json").read_text())["tier1"]["circularity_eq4"]


def test_convergence_static_eigenbasis(write_config, tmp_path):
    path = write_config("""
model: {name: static_diagonal, dim: 2, params: {d1: 1.0, d2: 2.0}, frame: [0]}
run: {t_final: 2.0, steps: 100}
""")
    out = tmp_path / "static.csv"
    assert main(["convergence", path, "--halvings", "2", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert all(float(r["res_factorization"]) <= 1e-10 for r in rows)
    assert rows[0]["fitted_order_fact"] == "exact"


def test_convergence_spin(tmp_path):
    out = tmp_path / "spin.csv"
    assert main(["convergence", str(CONFIG_DIR / "spin_half_rotating.yaml"), "--halvings", "4",
                 "--out", str(out)]) == 0
    rows = read_rows(out)
    assert list(rows[0]) == ["dt", "res_factorization", "res_ode_max", "res_identity_max", "res_circularity",
                             "iso_defect_src", "iso_defect_tgt", "fitted_order_fact", "fitted_order_ode"]
    dts = [float(r["dt"]) for r in rows]
    assert dts == sorted(dts, reverse=True)
    assert dts[0] == pytest.approx(4e-3)
    assert float(rows[0]["fitted_order_fact"]) >= 1
    assert abs(float(rows[0]["fitted_order_ode"]) - 2) <= 0.2


def test_convergence_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["convergence", str(CONFIG_DIR / "random_smooth.yaml"), "--halvings", "2",
                     "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_convergence_needs_two_halvings(capsys):
    assert main(["convergence", str(CONFIG_DIR / "zero.yaml"), "--halvings", "1"]) == 2


def test_verify_zero(capsys):
    assert main(["verify", str(CONFIG_DIR / "zero.yaml")]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "20/20 invariants passed" in out


def test_verify_tripod(capsys):
    assert main(["verify", str(CONFIG_DIR / "tripod_dark.yaml")]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "[PASS] negative control: dynamic dD/dt = D F reversed" in out


def test_verify_misordered_holonomy_fails(write_config, capsys):
    text = (CONFIG_DIR / "tripod_dark.yaml").read_text() + "  flags: {reverse_holonomy_order: true}\n"
    assert main(["verify", write_config(text)]) == 1
    out = capsys.readouterr().out
    assert "[FAIL] ordering: holonomy dW/dt = Pdot W" in out


def test_binary_exit_codes(write_config):
    ok = subprocess.run([sys.executable, "-m", "holodyn", "verify", str(CONFIG_DIR / "zero.yaml")],
                        capture_output=True, text=True)
    assert ok.returncode == 0, ok.stderr
    bad = write_config("{model: zero, dim: 2, t_final: 1, steps: 0, frame: [0]}")
    fail = subprocess.run([sys.executable, "-m", "holodyn", "run", bad], capture_output=True, text=True)
    assert fail.returncode == 2
    assert "steps" in fail.stderr
