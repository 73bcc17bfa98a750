"""Command-line entry point.

Usage::

    gkpstab <command> [--config FILE] [--out DIR] [--deterministic]
                      [--dim N] [--lattice square|hex] [--set key=value ...]

Commands: ``simulate``, ``spectrum``, ``bounds``, ``sweep``, ``pauli-check``.

Configuration is a TOML file with the tables shown in ``DEFAULTS``; a JSON
sidecar written by a previous run is accepted too and reproduces that run.
``--set`` takes dotted keys such as ``model.epsilon=0.05``.

Exit codes: 0 success, 2 configuration error, 3 numerical invariant
violation, 4 non-convergence.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_NONCONVERGED = 4

COMMANDS = ("simulate", "spectrum", "bounds", "sweep", "pauli-check")

DEFAULTS = {
    "lattice": "square",
    "deterministic": False,
    "out": "runs",
    "model": {"epsilon": 0.1, "gamma": 1.0, "eta": None, "m_fold": None},
    "truncation": {"dim": None, "headroom": 8.0},
    "integrator": {
        "method": "rk45_adaptive",
        "dt": 0.02,
        "rtol": 1e-8,
        "atol": 1e-10,
        "t_final": 50.0,
        "n_records": 101,
    },
    "noise": {"kind": "quadrature", "kappa": 0.0},
    "initial": {"state": "vacuum"},
    "spectrum": {"sigma": None, "kappa": 0.0, "K": 128, "n_eigs": 8},
    "bounds": {"n0": 0.0, "t_final": None, "n_points": 201},
    "sweep": {
        "kinds": ["quadrature"],
        "kappas": [0.02, 0.05],
        "t_budget": 400.0,
        "record_dt": 2.0,
        "theory_only": False,
        "theory_points": 201,
        "theory_kappa_max": 0.1,
    },
    "pauli": {"n_terms": 25},
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _load_file(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".json":
        data = json.loads(text)
        return data.get("config", data)
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def _parse_value(raw: str):
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def _merge(base: dict, update: dict, where: str = ""):
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key} must be a table")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        data = _load_file(args.config)
        data.pop("command", None)
        _merge(cfg, data)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        update = _parse_value(raw.strip())
        for part in reversed(parts):
            update = {part: update}
        _merge(cfg, update)
    if args.out is not None:
        cfg["out"] = args.out
    if args.deterministic:
        cfg["deterministic"] = True
    if args.dim is not None:
        cfg["truncation"]["dim"] = args.dim
    if args.lattice is not None:
        cfg["lattice"] = args.lattice
    if cfg["lattice"] == "hex":
        cfg["lattice"] = "hexagonal"
    if cfg["lattice"] not in ("square", "hexagonal"):
        raise ConfigError(f"lattice must be square or hex, got {cfg['lattice']!r}")
    if cfg["deterministic"]:
        cfg["integrator"]["method"] = "rk4_fixed"
    return cfg


def model_params(cfg):
    from .fock import ModelParams

    m = cfg["model"]
    base = ModelParams.square if cfg["lattice"] == "square" else ModelParams.hexagonal
    try:
        preset = base(float(m["epsilon"]), float(m["gamma"]))
        return ModelParams(
            epsilon=preset.epsilon,
            eta=float(m["eta"]) if m["eta"] is not None else preset.eta,
            m_fold=int(m["m_fold"]) if m["m_fold"] is not None else preset.m_fold,
            gamma=preset.gamma,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model parameters: {exc}") from exc


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _write_json(path: Path, payload: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    import numpy as np

    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _resolve_dim(cfg, params, warnings_out: list) -> int:
    from .bounds import InvalidBoundParams, recommend_truncation

    headroom = float(cfg["truncation"]["headroom"])
    try:
        recommended = recommend_truncation(params, headroom=headroom)
    except InvalidBoundParams:
        recommended = None
    dim = cfg["truncation"]["dim"]
    if dim is None:
        if recommended is None:
            raise ConfigError("no truncation given and the energy bound is not valid for these parameters")
        return recommended
    dim = int(dim)
    if dim < 2:
        raise ConfigError("dim must be >= 2")
    if recommended is not None and dim < recommended:
        msg = f"warning: dim={dim} is below the recommended truncation {recommended}"
        print(msg, file=sys.stderr)
        warnings_out.append(msg)
    return dim


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg, out: Path) -> tuple[int, dict]:
    import numpy as np

    from .bounds import R_GRID, EnergyBoundParams, bound_curve
    from .fock import number
    from .lindblad import IntegratorConfig, NoiseChannel, evolve, fock_state, full_model, seed_state
    from .observables import build_pauli
    from .spectrum import lattice_of

    warns: list = []
    params = model_params(cfg)
    dim = _resolve_dim(cfg, params, warns)
    ic = cfg["integrator"]
    t_final = float(ic["t_final"])
    n_rec = 1 if t_final == 0 else int(ic["n_records"])
    if n_rec < 1 or t_final < 0:
        raise ConfigError("integrator.t_final must be >= 0 and n_records >= 1")
    icfg = IntegratorConfig.uniform(
        t_final, n_rec, method=ic["method"], dt=float(ic["dt"]), rtol=float(ic["rtol"]), atol=float(ic["atol"])
    ) if t_final > 0 else IntegratorConfig(t_final=0.0, record_times=(0.0,), method=ic["method"])
    noise = cfg["noise"]
    channels = [NoiseChannel(noise["kind"], float(noise["kappa"]))]
    model = full_model(params, dim, channels)

    state = cfg["initial"]["state"]
    if state == "vacuum":
        rho0 = fock_state(0, dim)
    elif state == "seed":
        rho0 = seed_state(params, dim)
    else:
        raise ConfigError(f"initial.state must be vacuum or seed, got {state!r}")

    paulis = build_pauli(lattice_of(params), dim)
    observables = {"N": number(dim), "x": paulis.x, "y": paulis.y, "z": paulis.z}
    traj = evolve(model, rho0, icfg, observables)
    csv_path = out / "trajectory.csv"
    traj.to_csv(csv_path, ["N", "x", "y", "z"])

    n0 = float(traj["N"][0])
    violations = 0
    bound = None
    try:
        curves = [bound_curve(EnergyBoundParams.from_model(params, r), n0) for r in R_GRID]
        bound = np.min([c(traj.times) for c in curves], axis=0)
        violations = int(np.sum(traj["N"] > bound))
    except ValueError as exc:
        warns.append(f"energy bound unavailable: {exc}")
    bloch_norm = traj["x"] ** 2 + traj["y"] ** 2 + traj["z"] ** 2
    summary = {
        "dim": dim,
        "n_records": len(traj.times),
        "n_steps": traj.n_steps,
        "bound_violations": violations,
        "bound_certified": bound is not None and float(noise["kappa"]) == 0.0,
        "max_trace_drift": float(traj.trace_drift.max()),
        "max_hermiticity_drift": float(traj.hermiticity_drift.max()),
        "min_eigenvalue": float(np.nanmin(traj.min_eigenvalue)),
        "max_bloch_norm_sq": float(bloch_norm.max()),
        "final": {k: float(v[-1]) for k, v in traj.records.items()},
        "warnings": warns,
        "outputs": [csv_path.name],
    }
    code = EXIT_OK
    if summary["max_trace_drift"] > 1e-8 or summary["max_hermiticity_drift"] > 1e-8:
        code = EXIT_INVARIANT
    if bound is not None and violations and summary["bound_certified"]:
        code = EXIT_INVARIANT
    return code, summary


def cmd_spectrum(cfg, out: Path) -> tuple[int, dict]:
    from .spectrum import assemble_circle, eig_circle, eig_torus_checked, sigma_of

    sc = cfg["spectrum"]
    params = model_params(cfg)
    sigma = float(sc["sigma"]) if sc["sigma"] is not None else sigma_of(params, float(sc["kappa"]))
    cutoff = int(sc["K"])
    n_eigs = int(sc["n_eigs"])
    if cfg["lattice"] == "square":
        res = eig_circle(assemble_circle(sigma, cutoff))
        values = res.eigenvalues[:n_eigs]
        kind = "square"
    else:
        res = eig_torus_checked(sigma, "hexagonal", cutoff, n_eigs=n_eigs)
        values = res.eigenvalues
        kind = "hexagonal"
    path = out / "spectrum.json"
    payload = {
        "sigma": sigma,
        "lattice": kind,
        "K": cutoff,
        "eigenvalues": [float(v.real) for v in values],
        "converged": bool(res.converged),
    }
    _write_json(path, payload)
    summary = {**payload, "max_imag": res.max_imag, "residual": res.residual, "outputs": [path.name], "warnings": []}
    return (EXIT_OK if res.converged else EXIT_NONCONVERGED), summary


def cmd_bounds(cfg, out: Path) -> tuple[int, dict]:
    import numpy as np

    from .bounds import R_GRID, EnergyBoundParams, InvalidBoundParams, best_r, bound_curve, coefficients, phi, recommend_truncation

    params = model_params(cfg)
    try:
        rows = []
        for r in R_GRID:
            lam, mu = coefficients(EnergyBoundParams.from_model(params, r))
            rows.append({"r": r, "lambda": lam, "mu": mu, "C": mu / lam})
        r_best = best_r(params)
        rec = recommend_truncation(params, headroom=float(cfg["truncation"]["headroom"]))
    except InvalidBoundParams as exc:
        raise ConfigError(str(exc)) from exc
    bc = cfg["bounds"]
    curve = bound_curve(EnergyBoundParams.from_model(params, r_best), float(bc["n0"]))
    t_final = float(bc["t_final"]) if bc["t_final"] is not None else 20.0 / curve.lam
    times = np.linspace(0.0, t_final, int(bc["n_points"]))
    path = out / "bound_curve.csv"
    with open(path, "w", newline="\n") as fh:
        fh.write("time,bound\n")
        for t, b in zip(times, curve(times)):
            fh.write(f"{_fmt(t)},{_fmt(b)}\n")
    summary = {
        "phi": phi(params.epsilon, params.eta),
        "table": rows,
        "best_r": r_best,
        "recommended_dim": rec,
        "outputs": [path.name],
        "warnings": [],
    }
    return EXIT_OK, summary


def cmd_sweep(cfg, out: Path) -> tuple[int, dict]:
    import numpy as np

    from .rates import SweepSpec, run_sweep, theory_rate, write_sweep_csv, write_sweep_json

    sw = cfg["sweep"]
    params = model_params(cfg)
    kappas = sorted(float(k) for k in sw["kappas"])
    if not kappas and not sw["theory_only"]:
        raise ConfigError("sweep.kappas is empty and theory_only is off: nothing to do")
    grid = np.linspace(0.0, float(sw["theory_kappa_max"]), int(sw["theory_points"]))
    theory_path = out / "theory_curve.csv"
    with open(theory_path, "w", newline="\n") as fh:
        fh.write("kappa,gamma_theory\n")
        for k in grid:
            fh.write(f"{_fmt(k)},{_fmt(theory_rate(k, params))}\n")
    outputs = [theory_path.name]
    summary = {"outputs": outputs, "warnings": [], "kinds": {}}
    if sw["theory_only"]:
        return EXIT_OK, summary
    warns: list = []
    dim = _resolve_dim(cfg, params, warns)
    summary["warnings"] = warns
    ic = cfg["integrator"]
    total = ok = 0
    from .lindblad import seed_state

    seed = seed_state(params, dim)
    for kind in sw["kinds"]:
        spec = SweepSpec(
            kind=kind,
            kappas=tuple(kappas),
            params=params,
            dim=dim,
            t_budget=float(sw["t_budget"]),
            record_dt=float(sw["record_dt"]),
            method=ic["method"],
            dt=float(ic["dt"]),
            rtol=float(ic["rtol"]),
            atol=float(ic["atol"]),
        )
        rows = run_sweep(spec, seed=seed)
        csv_path = out / f"sweep_{kind}.csv"
        json_path = out / f"sweep_{kind}.json"
        write_sweep_csv(rows, csv_path)
        write_sweep_json(spec, rows, json_path)
        outputs += [csv_path.name, json_path.name]
        total += len(rows)
        ok += sum(not r.flag.startswith("error") for r in rows)
        summary["kinds"][kind] = [
            {"kappa": r.kappa, "gamma_fit": r.gamma_fit, "gamma_theory": r.gamma_theory, "flag": r.flag} for r in rows
        ]
    summary["success_fraction"] = ok / total if total else 1.0
    return (EXIT_OK if summary["success_fraction"] >= 0.8 else EXIT_INVARIANT), summary


def cmd_pauli_check(cfg, out: Path) -> tuple[int, dict]:
    import numpy as np

    from .observables import bloch, build_pauli, low_block
    from .spectrum import lattice_of

    params = model_params(cfg)
    dim = int(cfg["truncation"]["dim"] or 128)
    lat = lattice_of(params)
    eig = build_pauli(lat, dim)
    four = build_pauli(lat, dim, "fourier", n_terms=int(cfg["pauli"]["n_terms"]))
    vac = np.zeros((dim, dim))
    vac[0, 0] = 1.0
    report = {
        "dim": dim,
        "lattice": lat.kind,
        "hermiticity": max(float(np.abs(o - o.conj().T).max()) for o in (eig.x, eig.y, eig.z)),
        "anticommutator_low": float(np.linalg.norm(low_block(eig.x @ eig.z + eig.z @ eig.x), 2)),
        "algebra_low": float(np.linalg.norm(low_block(eig.x @ eig.y - 1j * eig.z), 2)),
        "eigen_vs_fourier_low": max(
            float(np.linalg.norm(low_block(a - b))) for a, b in ((eig.x, four.x), (eig.y, four.y), (eig.z, four.z))
        ),
        "vacuum_bloch_eigen": bloch(vac, eig),
        "vacuum_bloch_fourier": bloch(vac, four),
    }
    path = out / "pauli_check.json"
    _write_json(path, report)
    return EXIT_OK, {**report, "outputs": [path.name], "warnings": []}


HANDLERS = {
    "simulate": cmd_simulate,
    "spectrum": cmd_spectrum,
    "bounds": cmd_bounds,
    "sweep": cmd_sweep,
    "pauli-check": cmd_pauli_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gkpstab", description="Dissipative grid-state stabilization experiments.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="TOML config or JSON sidecar from a previous run")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--deterministic", action="store_true", help="fixed-step integrator, single-threaded math")
    parser.add_argument("--dim", type=int, help="Fock truncation override")
    parser.add_argument("--lattice", choices=("square", "hex", "hexagonal"))
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    return parser


def _single_thread():
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if cfg["deterministic"]:
            _single_thread()
        out = _prepare_out(cfg["out"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .lindblad import IntegrationError, InvariantViolation

    try:
        code, summary = HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, InvariantViolation, FloatingPointError) as exc:
        print(f"numerical invariant violated: {exc}", file=sys.stderr)
        _write_json(out / f"{args.command}.run.json", {"command": args.command, "config": cfg, "error": str(exc)})
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sidecar = {"command": args.command, "config": cfg, "exit_code": code, "summary": summary}
    _write_json(out / f"{args.command}.run.json", sidecar)
    print(json.dumps({"command": args.command, "exit_code": code, "out": str(out)}, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
