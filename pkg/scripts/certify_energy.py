"""Vacuum under the stabilizers at the recommended truncation, checked against the energy bound.

    python scripts/certify_energy.py --eps 0.1 --out runs/certify
"""
import argparse
import csv
import json
import time
from pathlib import Path

import numpy as np

from gkpstab.bounds import R_GRID, EnergyBoundParams, best_r, bound_curve, coefficients, recommend_truncation
from gkpstab.fock import ModelParams, number
from gkpstab.lindblad import IntegratorConfig, evolve, fock_state, stabilizer_model


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--lattice", choices=("square", "hexagonal"), default="square")
    ap.add_argument("--dim", type=int, default=None, help="defaults to the recommended truncation")
    ap.add_argument("--records-per-unit", type=float, default=4.0)
    ap.add_argument("--out", default="runs/certify")
    args = ap.parse_args()

    params = ModelParams.square(args.eps) if args.lattice == "square" else ModelParams.hexagonal(args.eps)
    dim = args.dim or recommend_truncation(params)
    lam = coefficients(EnergyBoundParams.from_model(params, best_r(params)))[0]
    t_final = 20.0 / lam
    icfg = IntegratorConfig.uniform(t_final, int(np.ceil(args.records_per_unit * t_final)) + 1)

    t0 = time.perf_counter()
    traj = evolve(stabilizer_model(params, dim), fock_state(0, dim), icfg, {"N": number(dim)})
    elapsed = time.perf_counter() - t0
    bound = np.min([bound_curve(EnergyBoundParams.from_model(params, r), 0.0)(traj.times) for r in R_GRID], axis=0)
    violations = int(np.sum(traj["N"] > bound))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "energy.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "N", "bound"])
        for row in zip(traj.times, traj["N"], bound):
            w.writerow([format(float(v), ".17g") for v in row])
    summary = {
        "epsilon": args.eps,
        "lattice": args.lattice,
        "dim": dim,
        "t_final": t_final,
        "violations": violations,
        "max_N": float(traj["N"].max()),
        "steady_bound": float(bound[-1]),
        "max_trace_drift": float(traj.trace_drift.max()),
        "max_hermiticity_drift": float(traj.hermiticity_drift.max()),
        "min_eigenvalue": float(np.nanmin(traj.min_eigenvalue)),
        "seconds": elapsed,
    }
    (out / "energy.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(json.dumps(summary, sort_keys=True, indent=2))


if __name__ == "__main__":
    main()
