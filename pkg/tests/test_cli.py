import csv
import json

import pytest

from gkpstab.cli import EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_OK, main

SMALL = ["--dim", "20", "--set", "integrator.t_final=1.0", "--set", "integrator.n_records=6"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _sidecar(out, command):
    return json.loads((out / f"{command}.run.json").read_text())


def test_simulate_writes_trajectory_and_sidecar(tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--out", str(out), *SMALL]) == EXIT_OK
    table = _rows(out / "trajectory.csv")
    assert table[0] == ["time", "N", "x", "y", "z"]
    assert len(table) == 7
    side = _sidecar(out, "simulate")
    assert side["summary"]["bound_violations"] == 0
    assert side["config"]["truncation"]["dim"] == 20
    # below the recommended truncation: stderr and sidecar both say so
    err = capsys.readouterr().err
    assert "below the recommended truncation" in err
    assert any("below the recommended truncation" in w for w in side["summary"]["warnings"])


def test_zero_duration_gives_initial_row(tmp_path):
    out = tmp_path / "zero"
    assert main(["simulate", "--out", str(out), "--dim", "16", "--set", "integrator.t_final=0"]) == EXIT_OK
    table = _rows(out / "trajectory.csv")
    assert len(table) == 2
    assert float(table[1][0]) == 0.0 and float(table[1][1]) == 0.0  # vacuum has N = 0


def test_deterministic_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--deterministic", "--out", str(a), *SMALL]) == EXIT_OK
    assert main(["simulate", "--deterministic", "--out", str(b), *SMALL]) == EXIT_OK
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    assert _sidecar(a, "simulate")["config"]["integrator"]["method"] == "rk4_fixed"


def test_rerun_from_sidecar_reproduces_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--deterministic", "--out", str(a), *SMALL]) == EXIT_OK
    assert main(["simulate", "--config", str(a / "simulate.run.json"), "--out", str(b)]) == EXIT_OK
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()


def test_csv_format(tmp_path):
    out = tmp_path / "fmt"
    main(["simulate", "--out", str(out), *SMALL])
    raw = (out / "trajectory.csv").read_bytes()
    assert b"\r\n" not in raw
    side = (out / "simulate.run.json").read_text()
    assert json.loads(side) == json.loads(json.dumps(json.loads(side), sort_keys=True))


def test_toml_config(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('lattice = "square"\n[model]\nepsilon = 0.1\n[truncation]\ndim = 16\n[integrator]\nt_final = 0.5\nn_records = 3\n')
    out = tmp_path / "toml"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert len(_rows(out / "trajectory.csv")) == 4


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--set", "model.nonsense=1"],
        ["simulate", "--set", "initial.state=cat", "--dim", "8"],
        ["sweep", "--set", "sweep.kappas=[]"],
        ["bounds", "--set", "model.epsilon=0.5"],
    ],
)
def test_config_errors_exit_2(tmp_path, argv):
    assert main([*argv, "--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["bounds", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["bounds", "--out", str(blocker / "sub")]) == EXIT_CONFIG


def test_spectrum_square(tmp_path):
    out = tmp_path / "spec"
    assert main(["spectrum", "--out", str(out), "--set", "spectrum.sigma=0.25", "--set", "spectrum.K=64"]) == EXIT_OK
    data = json.loads((out / "spectrum.json").read_text())
    assert data["converged"] and abs(data["eigenvalues"][0]) < 1e-10
    assert data["eigenvalues"][1] == pytest.approx(0.0204952158, rel=1e-6)


def test_spectrum_hexagonal_cluster(tmp_path):
    out = tmp_path / "hex"
    code = main(["spectrum", "--lattice", "hex", "--out", str(out), "--set", "spectrum.sigma=0.25", "--set", "spectrum.K=24"])
    assert code == EXIT_OK
    vals = json.loads((out / "spectrum.json").read_text())["eigenvalues"]
    assert max(vals[1:4]) / min(vals[1:4]) < 1.1 and vals[4] / vals[3] > 10


def test_spectrum_not_converged_exit_4(tmp_path):
    # far too few modes for a small diffusion constant
    argv = ["spectrum", "--out", str(tmp_path), "--set", "spectrum.sigma=0.05", "--set", "spectrum.K=4"]
    assert main(argv) == EXIT_NONCONVERGED


def test_bounds(tmp_path):
    assert main(["bounds", "--out", str(tmp_path)]) == EXIT_OK
    side = _sidecar(tmp_path, "bounds")
    assert side["summary"]["recommended_dim"] == 307
    assert side["summary"]["best_r"] == 0.9
    assert len(_rows(tmp_path / "bound_curve.csv")) == 202


def test_sweep_theory_only(tmp_path):
    argv = ["sweep", "--out", str(tmp_path), "--set", "sweep.theory_only=true", "--set", "sweep.kappas=[]"]
    assert main(argv) == EXIT_OK
    table = _rows(tmp_path / "theory_curve.csv")
    assert table[0] == ["kappa", "gamma_theory"] and len(table) == 202
    assert float(table[1][1]) == pytest.approx(5.3300028073612476888e-7, rel=1e-12)
    assert not (tmp_path / "sweep_quadrature.csv").exists()


def test_pauli_check(tmp_path):
    assert main(["pauli-check", "--dim", "48", "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "pauli_check.json").read_text())
    assert report["hermiticity"] < 1e-8
    x, y, z = report["vacuum_bloch_fourier"]
    assert x == pytest.approx(z) and abs(y) < 1e-10
