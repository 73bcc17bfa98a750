"""Logical decay rates: fits to simulated trajectories and closed-form predictions."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .fock import ModelParams
from .lindblad import IntegratorConfig, NoiseChannel, Trajectory, evolve, full_model, seed_state
from .observables import build_pauli
from .spectrum import asymptotic_rates, circle_gap, eig_torus, assemble_torus, lattice_of, sigma_of

MIN_FIT_SAMPLES = 10
MEASURABLE_RATE = 1e-5


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class RateFit:
    gamma_fit: float
    amplitude: float
    fit_window: tuple
    residual: float
    n_points: int


def fit_series(times, values, t_min: float = 0.0, t_max: float | None = None) -> RateFit:
    """Least-squares line through ``log y`` on ``[t_min, t_max]``; returns the decay rate."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t_max = times[-1] if t_max is None else t_max
    sel = (times >= t_min - 1e-12) & (times <= t_max + 1e-12)
    if sel.sum() < MIN_FIT_SAMPLES:
        raise FitError(f"fit window [{t_min:.4g}, {t_max:.4g}] holds {sel.sum()} samples, need {MIN_FIT_SAMPLES}")
    t, y = times[sel], values[sel]
    if np.any(y <= 0) and np.any(y >= 0):
        raise FitError("observable changes sign or vanishes inside the fit window")
    logy = np.log(np.abs(y))
    slope, intercept = np.polyfit(t, logy, 1)
    resid = logy - (slope * t + intercept)
    return RateFit(
        gamma_fit=float(-slope),
        amplitude=float(math.copysign(math.exp(intercept), y[0])),
        fit_window=(float(t[0]), float(t[-1])),
        residual=float(np.sqrt(np.mean(resid**2))),
        n_points=int(sel.sum()),
    )


def fit_exponential(traj: Trajectory, observable: str = "X", t_min: float = 0.0, t_max: float | None = None) -> RateFit:
    return fit_series(traj.times, traj.records[observable], t_min, t_max)


def theory_rate(kappa: float, params: ModelParams) -> float:
    """Asymptotic logical decay rate ``gamma A eps eta * mu_asym(sigma(kappa))``."""
    scale = params.gamma * params.amplitude * params.epsilon * params.eta
    return scale * asymptotic_rates(sigma_of(params, kappa), lattice_of(params))


def spectral_rate(kappa: float, params: ModelParams, cutoff: int = 128) -> float:
    """Same as ``theory_rate`` with the numerically computed first eigenvalue."""
    scale = params.gamma * params.amplitude * params.epsilon * params.eta
    sigma = sigma_of(params, kappa)
    if lattice_of(params).kind == "square":
        return scale * circle_gap(sigma, cutoff)
    res = eig_torus(assemble_torus(sigma, "hexagonal", min(cutoff, 64)), n_eigs=4)
    return scale * float(res.eigenvalues[1].real)


@dataclass
class SweepSpec:
    """One noise kind over a grid of rates.

    ``t_budget`` caps each run at ``min(5 / theory_rate, t_budget)``.
    """

    kind: str
    kappas: tuple
    params: ModelParams
    dim: int
    observable: str = "X"
    t_budget: float = 400.0
    record_dt: float = 2.0
    method: str = "rk45_adaptive"
    dt: float = 0.05
    rtol: float = 1e-8
    atol: float = 1e-10
    seed_duration: float | None = None

    def __post_init__(self):
        NoiseChannel(self.kind, 0.0)
        ks = tuple(float(k) for k in self.kappas)
        if any(k < 0 for k in ks) or list(ks) != sorted(ks):
            raise ValueError("kappa values must be nonnegative and sorted")
        self.kappas = ks


@dataclass
class SweepRow:
    kappa: float
    gamma_fit: float
    gamma_theory: float
    residual: float
    flag: str
    info: dict = field(default_factory=dict)


def run_sweep(spec: SweepSpec, seed: np.ndarray | None = None, keep_trajectories: bool = False) -> list[SweepRow]:
    """Seed once, then evolve and fit for every rate. Failures are flagged per row."""
    if not spec.kappas:
        return []
    p = spec.params
    t_start = time.perf_counter()
    if seed is None:
        seed = seed_state(p, spec.dim, duration=spec.seed_duration)
    seed_seconds = time.perf_counter() - t_start
    paulis = build_pauli(lattice_of(p), spec.dim).as_dict()
    obs = {spec.observable: paulis[spec.observable]}
    t_min = 10.0 * p.tau_trans
    rows = []
    for kappa in spec.kappas:
        theory = theory_rate(kappa, p)
        reference = "" if spec.kind == "quadrature" else "reference_only"
        t_final = min(5.0 / theory, spec.t_budget)
        n_rec = max(int(round(t_final / spec.record_dt)), 1) + 1
        icfg = IntegratorConfig.uniform(
            t_final, n_rec, method=spec.method, dt=spec.dt, rtol=spec.rtol, atol=spec.atol
        )
        t0 = time.perf_counter()
        try:
            model = full_model(p, spec.dim, [NoiseChannel(spec.kind, kappa)])
            traj = evolve(model, seed, icfg, obs)
            fit = fit_exponential(traj, spec.observable, t_min)
            info = {
                "t_final": t_final,
                "n_steps": traj.n_steps,
                "seconds": time.perf_counter() - t0,
                "trace_drift": float(traj.trace_drift.max()),
                "hermiticity_drift": float(traj.hermiticity_drift.max()),
                "min_eigenvalue": float(np.nanmin(traj.min_eigenvalue)),
                "fit_window": list(fit.fit_window),
                "amplitude": fit.amplitude,
            }
            if keep_trajectories:
                info["trajectory"] = traj
            if fit.gamma_fit < MEASURABLE_RATE:
                gamma, flag = spectral_rate(kappa, p), "spectral_substitute"
            else:
                gamma, flag = fit.gamma_fit, "ok"
            rows.append(SweepRow(kappa, gamma, theory, fit.residual, _join(flag, reference), info))
        except Exception as exc:  # per-point failure must not abort the sweep
            rows.append(SweepRow(kappa, math.nan, theory, math.nan, _join("error", reference), {"error": repr(exc)}))
    if rows:
        rows[0].info["seed_seconds"] = seed_seconds
    return rows


def _join(*flags):
    return ";".join(f for f in flags if f)


def write_sweep_csv(rows: list[SweepRow], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kappa", "gamma_fit", "gamma_theory", "residual", "flag"])
        for r in rows:
            writer.writerow([_g(r.kappa), _g(r.gamma_fit), _g(r.gamma_theory), _g(r.residual), r.flag])


def sweep_provenance(spec: SweepSpec, rows: list[SweepRow]) -> dict:
    spec_dict = asdict(spec)
    spec_dict["params"] = asdict(spec.params)
    return {
        "spec": spec_dict,
        "seed_protocol": {
            "initial": "vacuum",
            "dynamics": "stabilizers only",
            "duration": spec.seed_duration if spec.seed_duration is not None else 10.0 * spec.params.tau_trans,
        },
        "rows": [
            {**{k: v for k, v in asdict(r).items() if k != "info"}, "info": {k: v for k, v in r.info.items() if k != "trajectory"}}
            for r in rows
        ],
    }


def write_sweep_json(spec: SweepSpec, rows, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sweep_provenance(spec, rows), fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _g(x) -> str:
    return format(float(x), ".17g")
