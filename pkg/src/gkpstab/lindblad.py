"""Master-equation assembly and time integration on dense density matrices.

The generator is never materialized as a superoperator. Each right-hand-side
evaluation costs a handful of ``dim x dim`` matrix products.

When the model is invariant under the rotation ``exp(2 i pi N / S)`` and the
state is too, the state stays block diagonal in ``n mod S``. ``evolve``
detects this and switches to a block generator that only forms the diagonal
blocks; the dense generator remains the reference path.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .fock import ModelParams, TruncationWarning, ladder, number, quadratures, rotate, stabilizer_base

NOISE_KINDS = ("quadrature", "photon_loss", "detuning", "kerr", "dephasing")

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_TOL = 1e-8


class IntegrationError(RuntimeError):
    pass


class InvariantViolation(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# states


def check_density_matrix(rho: np.ndarray, *, herm_tol=HERMITICITY_TOL, trace_tol=TRACE_TOL, pos_tol=POSITIVITY_TOL):
    """Raise ``InvariantViolation`` unless ``rho`` is a valid density matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvariantViolation(f"density matrix must be square, got shape {rho.shape}")
    norm = max(np.linalg.norm(rho), 1e-300)
    if np.linalg.norm(rho - rho.conj().T) / norm > herm_tol:
        raise InvariantViolation("density matrix is not hermitian")
    if abs(np.trace(rho) - 1.0) > trace_tol:
        raise InvariantViolation(f"trace {np.trace(rho).real:.12g} differs from 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -pos_tol:
        raise InvariantViolation("density matrix has a negative eigenvalue")


def fock_state(n: int, dim: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[n, n] = 1.0
    return rho


def coherent_state(alpha: complex, dim: int) -> np.ndarray:
    """Truncated, renormalized ``|alpha><alpha|``."""
    n = np.arange(dim)
    log_amp = n * np.log(abs(alpha) + 1e-300) - 0.5 * np.cumsum(np.log(np.maximum(n, 1)))
    psi = np.exp(log_amp - 0.5 * abs(alpha) ** 2) * np.exp(1j * np.angle(alpha) * n)
    if alpha == 0:
        psi = np.zeros(dim)
        psi[0] = 1.0
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


# ---------------------------------------------------------------------------
# model


def dissipator_apply(jump, rho: np.ndarray) -> np.ndarray:
    """``L rho L^dag - 1/2 {L^dag L, rho}``."""
    if jump.shape != rho.shape:
        raise ValueError(f"dimension mismatch: {jump.shape} vs {rho.shape}")
    jd = jump.conj().T
    k = jd @ jump
    return jump @ rho @ jd - 0.5 * (k @ rho + rho @ k)


@dataclass(frozen=True)
class NoiseChannel:
    kind: str
    kappa: float

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa!r}")


@dataclass(frozen=True)
class RotatedFamily:
    """The jumps ``R^k base R^-k`` for ``k < order``, ``R = exp(2 i pi N / order)``, each at ``rate``."""

    base: np.ndarray
    rate: float
    order: int

    def operators(self) -> list[np.ndarray]:
        return [rotate(self.base, 2 * math.pi * k / self.order) for k in range(self.order)]


@dataclass
class LindbladModel:
    """Jump operators with rates and hermitian terms with strengths.

    ``symmetry`` is the rotation order under which the generator is known to
    be invariant, or ``None``. All builders in this module set it correctly;
    adding terms by hand should clear it unless the caller knows better.
    """

    dim: int
    jump_terms: list = field(default_factory=list)
    hamiltonian_terms: list = field(default_factory=list)
    families: list = field(default_factory=list)
    symmetry: int | None = None

    def __post_init__(self):
        for op, rate in list(self.jump_terms) + list(self.hamiltonian_terms):
            if op.shape != (self.dim, self.dim):
                raise ValueError(f"operator shape {op.shape} does not match dim {self.dim}")
            if not math.isfinite(rate):
                raise ValueError("rates and strengths must be finite")
        for op, rate in self.jump_terms:
            if rate < 0:
                raise ValueError("jump rates must be >= 0")
        for fam in self.families:
            if fam.base.shape != (self.dim, self.dim) or fam.rate < 0:
                raise ValueError("invalid rotated family")

    def all_jumps(self) -> list[tuple[np.ndarray, float]]:
        out = [(op, fam.rate) for fam in self.families for op in fam.operators()]
        return out + [(_dense(op), rate) for op, rate in self.jump_terms]

    def extended(self, other: "LindbladModel") -> "LindbladModel":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        sym = _combine_symmetry(self.symmetry, other.symmetry)
        return LindbladModel(
            self.dim,
            self.jump_terms + other.jump_terms,
            self.hamiltonian_terms + other.hamiltonian_terms,
            self.families + other.families,
            sym,
        )


# Every noise channel commutes with all phase-space rotations.
PHASE_COVARIANT = 0


def _combine_symmetry(a, b):
    if a is None or b is None:
        return None
    if a == PHASE_COVARIANT:
        return b
    if b == PHASE_COVARIANT:
        return a
    return math.gcd(a, b)


def _dense(op):
    return op.toarray() if sp.issparse(op) else op


def stabilizer_model(params: ModelParams, dim: int, method: str = "laguerre") -> LindbladModel:
    """The ``2M`` rotated stabilizers, each at rate ``gamma``."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        base = stabilizer_base(params, dim, method=method)
    fam = RotatedFamily(base, params.gamma, 2 * params.m_fold)
    return LindbladModel(dim, families=[fam], symmetry=2 * params.m_fold)


def build_noise(channel: NoiseChannel, params: ModelParams, dim: int) -> LindbladModel:
    """Noise contribution of one channel.

    ``quadrature``: jumps q, p at kappa. ``photon_loss``: a at kappa.
    ``detuning``: H = N at kappa. ``kerr``: H = N^2 at kappa eps/eta.
    ``dephasing``: jump N at kappa eps/eta.
    """
    kappa = channel.kappa
    model = LindbladModel(dim, symmetry=PHASE_COVARIANT)
    if kappa == 0:
        return model
    scaled = kappa * params.epsilon / params.eta
    kind = channel.kind
    if kind == "quadrature":
        q, p = quadratures(dim)
        model.jump_terms += [(sp.csr_matrix(q), kappa), (sp.csr_matrix(p), kappa)]
    elif kind == "photon_loss":
        model.jump_terms.append((sp.csr_matrix(ladder(dim)), kappa))
    elif kind == "detuning":
        model.hamiltonian_terms.append((number(dim), kappa))
    elif kind == "kerr":
        n = number(dim)
        model.hamiltonian_terms.append((n @ n, scaled))
    elif kind == "dephasing":
        model.jump_terms.append((sp.csr_matrix(number(dim)), scaled))
    return model


def full_model(params: ModelParams, dim: int, noise: Sequence[NoiseChannel] = ()) -> LindbladModel:
    model = stabilizer_model(params, dim)
    for channel in noise:
        model = model.extended(build_noise(channel, params, dim))
    return model


# ---------------------------------------------------------------------------
# generators


def _effective_drift(model: LindbladModel) -> np.ndarray:
    """``G = -i H - 1/2 sum rate L^dag L`` so that the no-jump part is ``G rho + rho G^dag``."""
    dim = model.dim
    g = np.zeros((dim, dim), dtype=complex)
    for op, strength in model.hamiltonian_terms:
        g += -1j * strength * _dense(op)
    for fam in model.families:
        k = fam.base.conj().T @ fam.base
        n = np.arange(dim)
        g += -0.5 * fam.rate * fam.order * k * ((n[:, None] - n[None, :]) % fam.order == 0)
    for op, rate in model.jump_terms:
        op = _dense(op)
        g += -0.5 * rate * (op.conj().T @ op)
    return g


def _as_product(op):
    """Sparse operators keep their sparse form; dense ones are made contiguous."""
    if sp.issparse(op):
        return op.tocsr(), op.conj().T.tocsr()
    return np.ascontiguousarray(op), np.ascontiguousarray(op.conj().T)


class DenseGenerator:
    """Reference right-hand side on a full ``dim x dim`` matrix."""

    def __init__(self, model: LindbladModel):
        self.dim = model.dim
        self.drift = _effective_drift(model)
        self.drift_dag = np.ascontiguousarray(self.drift.conj().T)
        self.families = [
            (np.ascontiguousarray(f.base), np.ascontiguousarray(f.base.conj().T), f.rate, f.order)
            for f in model.families
        ]
        self.jumps = [(*_as_product(op), rate) for op, rate in model.jump_terms if rate > 0]
        n = np.arange(self.dim)
        self._diff = n[:, None] - n[None, :]

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = self.drift @ rho + rho @ self.drift_dag
        for base, base_dag, rate, order in self.families:
            for k in range(order):
                phase = np.exp(2j * math.pi * k / order * self._diff)
                out += rate * phase * (base @ (rho * phase.conj()) @ base_dag)
        for op, op_dag, rate in self.jumps:
            out += rate * _sandwich(op, op_dag, rho)
        return out


def _sandwich(op, op_dag, rho):
    """``op rho op^dag`` for dense or sparse ``op``."""
    if sp.issparse(op):
        left = op @ rho
        return np.asarray((op @ left.conj().T).conj().T)
    return op @ rho @ op_dag


class BlockGenerator:
    """Right-hand side restricted to states block diagonal in ``n mod order``.

    Works in the permuted basis where each residue class is contiguous. The
    rotated family collapses to ``order * mask(L0 rho L0^dag)``, and only the
    diagonal blocks of that product are formed.
    """

    def __init__(self, model: LindbladModel, order: int):
        dim = model.dim
        self.dim = dim
        self.order = order
        n = np.arange(dim)
        self.perm = np.argsort(n % order, kind="stable")
        self.inv = np.argsort(self.perm)
        residues = (n % order)[self.perm]
        self.blocks = [
            slice(int(np.searchsorted(residues, r)), int(np.searchsorted(residues, r, side="right")))
            for r in range(order)
        ]
        self.blocks = [b for b in self.blocks if b.stop > b.start]
        mask = np.zeros((dim, dim), dtype=bool)
        for b in self.blocks:
            mask[b, b] = True
        self.mask = mask
        drift = self.permute(_effective_drift(model))
        if np.abs(drift[~mask]).max(initial=0.0) > 1e-10 * max(np.abs(drift).max(), 1.0):
            raise ValueError(f"model is not invariant under rotations of order {order}")
        self.drift = [np.ascontiguousarray(drift[b, b]) for b in self.blocks]
        self.drift_dag = [np.ascontiguousarray(g.conj().T) for g in self.drift]
        self.families = []
        for fam in model.families:
            if fam.order % order:
                raise ValueError("family order incompatible with block order")
            base = self.permute(fam.base)
            self.families.append(
                (np.ascontiguousarray(base), np.ascontiguousarray(base.conj().T), fam.rate * fam.order)
            )
        self.jumps = []
        for op, rate in model.jump_terms:
            if rate > 0:
                op = sp.csr_matrix(op) if sp.issparse(op) else op
                self.jumps.append((*_as_product(self.permute(op)), rate))

    def permute(self, op):
        p = self.perm
        if sp.issparse(op):
            return op.tocsr()[p][:, p]
        return op[np.ix_(p, p)]

    def unpermute(self, op):
        return op[np.ix_(self.inv, self.inv)]

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho)
        for b, g, gd in zip(self.blocks, self.drift, self.drift_dag):
            rb = rho[b, b]
            out[b, b] = g @ rb + rb @ gd
        for base, base_dag, weight in self.families:
            left = np.empty_like(rho)
            for b in self.blocks:
                left[:, b] = base[:, b] @ rho[b, b]
            for b in self.blocks:
                out[b, b] += weight * (left[b, :] @ base_dag[:, b])
        if self.jumps:
            acc = np.zeros_like(rho)
            for op, op_dag, rate in self.jumps:
                acc += rate * _sandwich(op, op_dag, rho)
            out[self.mask] += acc[self.mask]
        return out


def rhs(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    if rho.shape != (model.dim, model.dim):
        raise ValueError(f"dimension mismatch: model dim {model.dim}, state {rho.shape}")
    return DenseGenerator(model)(rho)


def block_invariant(rho: np.ndarray, order: int, tol: float = 1e-14) -> bool:
    n = np.arange(rho.shape[0])
    off = (n[:, None] - n[None, :]) % order != 0
    return bool(np.abs(rho[off]).max(initial=0.0) <= tol * max(np.abs(rho).max(), 1e-300))


# ---------------------------------------------------------------------------
# integration


@dataclass(frozen=True)
class IntegratorConfig:
    """``method`` is ``"rk45_adaptive"`` (Dormand-Prince) or ``"rk4_fixed"``."""

    t_final: float
    record_times: tuple = ()
    method: str = "rk45_adaptive"
    dt: float = 0.02
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = 1.0
    min_step: float = 1e-10

    def __post_init__(self):
        if self.method not in ("rk45_adaptive", "rk4_fixed"):
            raise ValueError(f"unknown method {self.method!r}")
        times = tuple(float(t) for t in (self.record_times or (0.0, self.t_final)))
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("record_times must be strictly increasing")
        if times[0] < 0 or times[-1] > self.t_final + 1e-12:
            raise ValueError("record_times must lie in [0, t_final]")
        object.__setattr__(self, "record_times", times)

    @classmethod
    def uniform(cls, t_final: float, n_records: int, **kw) -> "IntegratorConfig":
        times = tuple(np.linspace(0.0, t_final, n_records)) if n_records > 1 else (float(t_final),)
        return cls(t_final=t_final, record_times=times, **kw)


@dataclass
class Trajectory:
    times: np.ndarray
    records: dict
    snapshots: list | None = None
    trace_drift: np.ndarray | None = None
    hermiticity_drift: np.ndarray | None = None
    min_eigenvalue: np.ndarray | None = None
    final_state: np.ndarray | None = None
    n_steps: int = 0

    def __getitem__(self, name):
        return self.records[name]

    def to_csv(self, path, names: Sequence[str] | None = None):
        write_trajectory_csv(self, path, names)


def write_trajectory_csv(traj: Trajectory, path, names: Sequence[str] | None = None):
    names = list(names or traj.records)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", *names])
        for i, t in enumerate(traj.times):
            writer.writerow([_fmt(t), *(_fmt(traj.records[n][i]) for n in names)])


def _fmt(x) -> str:
    return format(float(x), ".17g")


# Dormand-Prince 5(4) tableau
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


def _rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _dp_step(f, y, h, k1):
    ks = [k1]
    for i in range(1, 7):
        acc = y.copy()
        for a, k in zip(_DP_A[i], ks):
            if a:
                acc += (h * a) * k
        ks.append(f(acc))
    y_new = y.copy()
    err = np.zeros_like(y)
    for b, e, k in zip(_DP_B, _DP_E, ks):
        if b:
            y_new += (h * b) * k
        if e:
            err += (h * e) * k
    return y_new, err, ks[-1]


def _integrate(f, y0, icfg: IntegratorConfig, on_record: Callable):
    """Drive ``f`` through every record time, calling ``on_record(i, t, y)``."""
    times = icfg.record_times
    t, y = 0.0, y0
    n_steps = 0
    idx = 0
    while idx < len(times) and times[idx] <= 0.0:
        on_record(idx, 0.0, y)
        idx += 1
    if icfg.method == "rk4_fixed":
        for target in times[idx:]:
            n_sub = max(1, int(math.ceil((target - t) / icfg.dt - 1e-9)))
            h = (target - t) / n_sub
            for _ in range(n_sub):
                y = _rk4_step(f, y, h)
                n_steps += 1
            t = target
            _check_finite(y, t)
            on_record(idx, t, y)
            idx += 1
        return y, n_steps
    h = min(icfg.max_step, 0.01)
    k1 = f(y)
    for target in times[idx:]:
        while t < target:
            step = min(h, target - t)
            last = step == target - t
            y_new, err, k_last = _dp_step(f, y, step, k1)
            scale = icfg.atol + icfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = float(np.max(np.abs(err) / scale))
            if not math.isfinite(err_norm):
                raise IntegrationError(f"non-finite error estimate at t={t:.6g}")
            if err_norm <= 1.0:
                t = target if last else t + step
                y, k1 = y_new, k_last
                n_steps += 1
                factor = 5.0 if err_norm == 0 else min(5.0, 0.9 * err_norm ** -0.2)
                if not last or factor > 1:
                    h = min(icfg.max_step, step * factor) if not last else max(h, step)
            else:
                h = step * max(0.2, 0.9 * err_norm ** -0.2)
                if h < icfg.min_step:
                    raise IntegrationError(f"step size underflow at t={t:.6g} (h={h:.3g})")
        _check_finite(y, t)
        on_record(idx, t, y)
        idx += 1
    return y, n_steps


def _check_finite(y, t):
    if not np.all(np.isfinite(y)):
        raise IntegrationError(f"NaN or inf in state at t={t:.6g}")


def evolve(
    model: LindbladModel,
    rho0: np.ndarray,
    icfg: IntegratorConfig,
    observables: Mapping[str, np.ndarray] | None = None,
    *,
    store_states: bool = False,
    check_positivity: bool = True,
    use_symmetry: bool | None = None,
) -> Trajectory:
    """Integrate the master equation and record ``tr(O rho_t)`` at each record time.

    The state is re-symmetrized ``(rho + rho^dag)/2`` at record times only.
    ``use_symmetry=None`` picks the block generator whenever the model and the
    initial state are both rotation invariant.
    """
    rho0 = np.array(rho0, dtype=complex)
    if rho0.shape != (model.dim, model.dim):
        raise ValueError(f"dimension mismatch: model dim {model.dim}, state {rho0.shape}")
    check_density_matrix(rho0)
    observables = dict(observables or {})

    order = model.symmetry
    symmetric = bool(order) and block_invariant(rho0, order)
    if use_symmetry is None:
        use_symmetry = symmetric
    elif use_symmetry and not symmetric:
        raise ValueError("use_symmetry requested but model or state is not rotation invariant")

    if use_symmetry:
        gen = BlockGenerator(model, order)
        to_work, from_work = gen.permute, gen.unpermute
    else:
        gen = DenseGenerator(model)
        to_work, from_work = (lambda x: x), (lambda x: x)
    obs_t = {name: np.ascontiguousarray(to_work(_dense(op)).T) for name, op in observables.items()}

    n_rec = len(icfg.record_times)
    records = {name: np.zeros(n_rec) for name in observables}
    trace_drift = np.zeros(n_rec)
    herm_drift = np.zeros(n_rec)
    min_eig = np.full(n_rec, np.nan)
    times = np.zeros(n_rec)
    snaps = [] if store_states else None

    def on_record(i, t, y):
        times[i] = t
        herm_drift[i] = np.linalg.norm(y - y.conj().T)
        y[...] = 0.5 * (y + y.conj().T)
        trace_drift[i] = abs(np.trace(y) - 1.0)
        for name, ot in obs_t.items():
            records[name][i] = np.sum(ot * y).real
        if check_positivity:
            if use_symmetry:
                min_eig[i] = min(np.linalg.eigvalsh(y[b, b])[0] for b in gen.blocks)
            else:
                min_eig[i] = np.linalg.eigvalsh(y)[0]
        if store_states:
            snaps.append(from_work(y.copy()))

    y_final, n_steps = _integrate(gen, to_work(rho0), icfg, on_record)
    return Trajectory(
        times=times,
        records=records,
        snapshots=snaps,
        trace_drift=trace_drift,
        hermiticity_drift=herm_drift,
        min_eigenvalue=min_eig,
        final_state=from_work(y_final),
        n_steps=n_steps,
    )


def seed_state(
    params: ModelParams,
    dim: int,
    *,
    duration: float | None = None,
    icfg: IntegratorConfig | None = None,
) -> np.ndarray:
    """Vacuum relaxed under the stabilizers alone for ``10 tau_trans`` by default."""
    duration = 10.0 * params.tau_trans if duration is None else duration
    icfg = icfg or IntegratorConfig(t_final=duration, record_times=(duration,))
    if icfg.record_times != (duration,):
        icfg = IntegratorConfig(
            t_final=duration,
            record_times=(duration,),
            method=icfg.method,
            dt=icfg.dt,
            rtol=icfg.rtol,
            atol=icfg.atol,
            max_step=icfg.max_step,
        )
    traj = evolve(stabilizer_model(params, dim), fock_state(0, dim), icfg, check_positivity=False)
    rho = traj.final_state
    return 0.5 * (rho + rho.conj().T)
