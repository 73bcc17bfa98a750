import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import curve_fit

from gkpstab.fock import ModelParams
from gkpstab.lindblad import IntegratorConfig, LindbladModel, Trajectory
from gkpstab.rates import (
    FitError,
    SweepSpec,
    fit_exponential,
    fit_series,
    run_sweep,
    spectral_rate,
    theory_rate,
    write_sweep_csv,
    write_sweep_json,
)

SQ = ModelParams.square(0.1)
# 50-digit mpmath evaluations of Gamma A eps eta (4/pi) exp(-1/sigma)
GAMMA0_K0 = 5.3300028073612476888e-7
GAMMA0_K002 = 0.0014631370906300227228
GAMMA0_K005 = 0.019746411558080111622
GAMMA0_HEX_K0 = 9.1706625071753140372e-8


def test_fit_exact_exponential():
    t = np.linspace(0, 200, 100)
    fit = fit_series(t, np.exp(-0.02 * t))
    assert fit.gamma_fit == pytest.approx(0.02, abs=1e-10)
    fit = fit_series(t, 0.9 * np.exp(-0.02 * t))
    assert fit.gamma_fit == pytest.approx(0.02, abs=1e-10)
    assert fit.amplitude == pytest.approx(0.9)
    assert fit.n_points == 100 and fit.residual < 1e-10


def test_fit_two_exponentials_against_nonlinear_oracle():
    t = np.linspace(0, 200, 400)
    y = 0.9 * np.exp(-0.02 * t) + 0.1 * np.exp(-2 * t)
    fit = fit_series(t, y, t_min=5)
    popt, _ = curve_fit(lambda s, a, g, b, h: a * np.exp(-g * s) + b * np.exp(-h * s), t, y, p0=(1, 0.01, 0.1, 1))
    assert popt[1] == pytest.approx(0.02, rel=1e-6)
    assert fit.gamma_fit == pytest.approx(popt[1], rel=0.01)


def test_fit_errors():
    t = np.linspace(0, 10, 20)
    with pytest.raises(FitError):
        fit_series(t, np.exp(-t), t_min=9.0)
    with pytest.raises(FitError):
        fit_series(t, np.cos(t))


def test_fit_negative_decay_uses_magnitude():
    t = np.linspace(0, 10, 20)
    fit = fit_series(t, -2 * np.exp(-0.3 * t))
    assert fit.gamma_fit == pytest.approx(0.3)
    assert fit.amplitude == pytest.approx(-2)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1e-4, 0.5))
def test_fit_scale_invariant(scale, rate):
    t = np.linspace(0, 50, 60)
    y = np.exp(-rate * t) * (1 + 0.01 * np.sin(t))
    a = fit_series(t, y).gamma_fit
    b = fit_series(t, scale * y).gamma_fit
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_fit_from_trajectory():
    t = np.linspace(0, 100, 50)
    traj = Trajectory(times=t, records={"X": 0.5 * np.exp(-0.01 * t)})
    assert fit_exponential(traj, "X", t_min=10).gamma_fit == pytest.approx(0.01)


def test_theory_rate_values():
    assert theory_rate(0.0, SQ) == pytest.approx(GAMMA0_K0, rel=1e-12)
    assert theory_rate(0.02, SQ) == pytest.approx(GAMMA0_K002, rel=1e-12)
    assert theory_rate(0.05, SQ) == pytest.approx(GAMMA0_K005, rel=1e-12)
    assert theory_rate(0.0, ModelParams.hexagonal(0.1)) == pytest.approx(GAMMA0_HEX_K0, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(1e-6, 1))
def test_theory_rate_increasing(kappa, dk):
    assert theory_rate(kappa + dk, SQ) > theory_rate(kappa, SQ)


def test_spectral_rate_close_to_theory():
    # numeric eigenvalue vs leading asymptotic: same order, within the o(1)
    for kappa in (0.02, 0.05):
        ratio = spectral_rate(kappa, SQ) / theory_rate(kappa, SQ)
        assert 0.5 < ratio < 1.5


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("quadrature", (0.05, 0.02), SQ, 16)
    with pytest.raises(ValueError):
        SweepSpec("quadrature", (-0.1,), SQ, 16)
    with pytest.raises(ValueError):
        SweepSpec("thermal", (0.1,), SQ, 16)


def test_empty_sweep():
    assert run_sweep(SweepSpec("quadrature", (), SQ, 16)) == []


def test_small_sweep_runs_and_exports(tmp_path):
    # tiny truncation, short horizon: checks plumbing, not physics
    spec = SweepSpec("photon_loss", (0.05, 0.1), SQ, 40, t_budget=60.0, record_dt=1.0, seed_duration=5.0)
    rows = run_sweep(spec)
    assert [r.kappa for r in rows] == [0.05, 0.1]
    for r in rows:
        assert r.flag in ("ok;reference_only", "spectral_substitute;reference_only")
        assert math.isfinite(r.gamma_theory) and r.gamma_fit > 0
    write_sweep_csv(rows, tmp_path / "s.csv")
    write_sweep_json(spec, rows, tmp_path / "s.json")
    with open(tmp_path / "s.csv") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["kappa", "gamma_fit", "gamma_theory", "residual", "flag"]
    assert len(table) == 3
    meta = json.loads((tmp_path / "s.json").read_text())
    assert meta["spec"]["dim"] == 40 and meta["seed_protocol"]["duration"] == 5.0


def test_sweep_flags_failures_without_aborting():
    # horizon shorter than the fit window start: every point fails, the sweep still returns rows
    spec = SweepSpec("quadrature", (0.01, 0.02), SQ, 16, t_budget=5.0, record_dt=1.0, seed_duration=1.0)
    rows = run_sweep(spec)
    assert len(rows) == 2
    assert all(r.flag.startswith("error") and math.isnan(r.gamma_fit) for r in rows)
