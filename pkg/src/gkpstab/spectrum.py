"""Drift-diffusion operators on the circle and the torus in a Fourier basis.

The circle operator is ``T f = sin(2t) f' - sigma f''``. On the torus the
square lattice gives the Kronecker sum of two circle operators; the hexagonal
lattice adds coupled drifts and an anisotropic diffusion. Functions are
represented by Fourier coefficients on modes ``-K..K`` per axis and the
operators act on coefficient vectors. Modes outside the window are dropped.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fock import ModelParams
from .observables import HEXAGONAL, SQUARE, Lattice, PeriodicObservable

SQUARE_PREFACTOR = 4.0 / math.pi
HEX_PREFACTOR = 12.0 * math.sqrt(3.0) / math.pi
CONVERGENCE_RTOL = 1e-8

# Fourier stencils: (shift1, shift2, weight on m1, weight on m2).
# A drift term d(t) * dh/dt_i with d a sum of sin(2 t . s) contributes
# (m_i / 2) (e^{i(m + 2s)} - e^{i(m - 2s)}) per unit coefficient.
_SQUARE_DRIFT = (
    ((1, 0), 1.0, 0.0),
    ((0, 1), 0.0, 1.0),
)
_HEX_DRIFT = (
    ((1, 0), 1.0, -0.5),
    ((0, 1), -0.5, 1.0),
    ((1, 1), 0.5, 0.5),
)


def _lattice(lattice) -> Lattice:
    return lattice if isinstance(lattice, Lattice) else Lattice(lattice)


# ---------------------------------------------------------------------------
# circle


@dataclass(frozen=True)
class CircleOperator:
    sigma: float
    cutoff: int
    matrix: np.ndarray

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.cutoff, self.cutoff + 1)


def assemble_circle(sigma: float, cutoff: int, drift: float = 1.0) -> CircleOperator:
    """Real banded matrix of the circle operator; ``drift=0`` leaves the pure Laplacian."""
    if cutoff < 4:
        raise ValueError("cutoff must be >= 4")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    m = np.arange(-cutoff, cutoff + 1, dtype=float)
    mat = np.diag(sigma * m**2)
    half = 0.5 * drift * m
    idx = np.arange(2 * cutoff + 1)
    mat[idx[2:], idx[:-2]] += half[:-2]
    mat[idx[:-2], idx[2:]] -= half[2:]
    return CircleOperator(sigma=sigma, cutoff=cutoff, matrix=mat)


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float
    converged: bool
    max_imag: float
    meta: dict = field(default_factory=dict)

    def to_json(self, path=None, **extra) -> str:
        payload = {
            "eigenvalues": [float(v) for v in np.real(self.eigenvalues)],
            "converged": bool(self.converged),
            **{k: v for k, v in self.meta.items()},
            **extra,
        }
        text = json.dumps(payload, sort_keys=True, indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


def _sorted_eig(mat: np.ndarray):
    w, v = scipy.linalg.eig(mat)
    order = np.lexsort((w.imag, w.real))
    return w[order], v[:, order]


def _circle_eig_raw(op: CircleOperator, split: bool):
    n = op.matrix.shape[0]
    if not split:
        return _sorted_eig(op.matrix)
    vals, vecs = [], []
    for parity in (0, 1):
        idx = np.flatnonzero(op.modes % 2 == parity)
        w, v = _sorted_eig(op.matrix[np.ix_(idx, idx)])
        full = np.zeros((n, len(w)), dtype=complex)
        full[idx] = v
        vals.append(w)
        vecs.append(full)
    w = np.concatenate(vals)
    v = np.concatenate(vecs, axis=1)
    order = np.lexsort((w.imag, w.real))
    return w[order], v[:, order]


def eig_circle(op: CircleOperator, split: bool = True, check_convergence: bool = True, n_check: int = 4) -> SpectrumResult:
    """Full spectrum sorted by real part; convergence judged by re-solving at ``2K``."""
    w, v = _circle_eig_raw(op, split)
    v = v / np.linalg.norm(v, axis=0)
    residual = float(np.abs(op.matrix @ v - v * w).max())
    converged = True
    if check_convergence:
        fine = assemble_circle(op.sigma, 2 * op.cutoff)
        w2, _ = _circle_eig_raw(fine, split)
        a, b = w[1 : n_check + 1].real, w2[1 : n_check + 1].real
        converged = bool(np.all(np.abs(a - b) <= CONVERGENCE_RTOL * np.abs(b)))
    return SpectrumResult(
        eigenvalues=w,
        eigenvectors=v,
        residual=residual,
        converged=converged,
        max_imag=float(np.abs(w[: 2 * n_check + 1].imag).max()),
        meta={"sigma": op.sigma, "lattice": "circle", "K": op.cutoff},
    )


def circle_gap(sigma: float, cutoff: int = 128) -> float:
    """First nonzero eigenvalue of the circle operator."""
    return float(eig_circle(assemble_circle(sigma, cutoff), check_convergence=False).eigenvalues[1].real)


# ---------------------------------------------------------------------------
# torus


@dataclass(frozen=True)
class TorusOperator:
    sigma: float
    lattice: Lattice
    cutoff: int
    matrix: sp.csr_matrix

    def mode_grid(self):
        k = np.arange(-self.cutoff, self.cutoff + 1)
        return np.meshgrid(k, k, indexing="ij")


def _diffusion_symbol(lattice: Lattice, m1, m2):
    if lattice.kind == "square":
        return m1**2 + m2**2
    return m1**2 - m1 * m2 + m2**2


def assemble_torus(sigma: float, lattice, cutoff: int, drift: float = 1.0) -> TorusOperator:
    """Sparse matrix on 2D modes, flattened as ``(m1 + K) * (2K+1) + (m2 + K)``."""
    lattice = _lattice(lattice)
    if cutoff < 4:
        raise ValueError("cutoff must be >= 4")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    n = 2 * cutoff + 1
    k = np.arange(-cutoff, cutoff + 1)
    m1, m2 = np.meshgrid(k, k, indexing="ij")
    m1, m2 = m1.ravel().astype(float), m2.ravel().astype(float)
    src = np.arange(n * n)
    rows, cols, vals = [src], [src], [sigma * _diffusion_symbol(lattice, m1, m2)]
    stencil = _SQUARE_DRIFT if lattice.kind == "square" else _HEX_DRIFT
    i1, i2 = src // n, src % n
    for (s1, s2), w1, w2 in stencil:
        coef = 0.5 * drift * (w1 * m1 + w2 * m2)
        for sign in (1, -1):
            t1, t2 = i1 + 2 * sign * s1, i2 + 2 * sign * s2
            ok = (t1 >= 0) & (t1 < n) & (t2 >= 0) & (t2 < n) & (coef != 0)
            rows.append(t1[ok] * n + t2[ok])
            cols.append(src[ok])
            vals.append(sign * coef[ok])
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * n, n * n)
    )
    return TorusOperator(sigma=sigma, lattice=lattice, cutoff=cutoff, matrix=mat)


def _sector_indices(cutoff: int):
    k = np.arange(-cutoff, cutoff + 1)
    m1, m2 = np.meshgrid(k, k, indexing="ij")
    m1, m2 = m1.ravel(), m2.ravel()
    return {(a, b): np.flatnonzero((m1 % 2 == a) & (m2 % 2 == b)) for a in (0, 1) for b in (0, 1)}


def eig_torus(op: TorusOperator, n_eigs: int = 8, shift: float | None = None, dense: bool = False) -> SpectrumResult:
    """Lowest eigenvalues, found per parity sector by shift-invert Arnoldi.

    Modes only couple within the four ``(m1 mod 2, m2 mod 2)`` sectors.
    ``dense=True`` diagonalizes each sector fully instead.
    """
    shift = -0.05 if shift is None else shift
    n_total = op.matrix.shape[0]
    vals, vecs = [], []
    for idx in _sector_indices(op.cutoff).values():
        block = op.matrix[idx][:, idx]
        if dense or len(idx) <= max(4 * n_eigs, 64):
            w, v = _sorted_eig(block.toarray())
            w, v = w[:n_eigs], v[:, :n_eigs]
        else:
            w, v = spla.eigs(block.tocsc(), k=n_eigs, sigma=shift, which="LM")
        full = np.zeros((n_total, len(w)), dtype=complex)
        full[idx] = v
        vals.append(w)
        vecs.append(full)
    w = np.concatenate(vals)
    v = np.concatenate(vecs, axis=1)
    order = np.lexsort((w.imag, w.real))[:n_eigs]
    w, v = w[order], v[:, order]
    v = v / np.linalg.norm(v, axis=0)
    residual = float(np.abs(op.matrix @ v - v * w).max())
    return SpectrumResult(
        eigenvalues=w,
        eigenvectors=v,
        residual=residual,
        converged=True,
        max_imag=float(np.abs(w.imag).max()),
        meta={"sigma": op.sigma, "lattice": op.lattice.kind, "K": op.cutoff},
    )


def eig_torus_checked(sigma: float, lattice, cutoff: int, n_eigs: int = 8, n_check: int = 4) -> SpectrumResult:
    """``eig_torus`` plus a convergence flag from re-solving at ``2K``."""
    res = eig_torus(assemble_torus(sigma, lattice, cutoff), n_eigs=n_eigs)
    fine = eig_torus(assemble_torus(sigma, lattice, 2 * cutoff), n_eigs=n_eigs)
    a, b = res.eigenvalues[1 : n_check + 1].real, fine.eigenvalues[1 : n_check + 1].real
    res.converged = bool(np.all(np.abs(a - b) <= CONVERGENCE_RTOL * np.abs(b)))
    return res


# ---------------------------------------------------------------------------
# asymptotics and predictions


def asymptotic_rates(sigma: float, lattice) -> float:
    """Leading-order small eigenvalue: ``(4/pi) e^{-1/sigma}`` or ``(12 sqrt3/pi) e^{-2/sigma}``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if _lattice(lattice).kind == "square":
        return SQUARE_PREFACTOR * math.exp(-1.0 / sigma)
    return HEX_PREFACTOR * math.exp(-2.0 / sigma)


def sigma_of(params: ModelParams, kappa: float = 0.0) -> float:
    """Effective diffusion from regularization plus quadrature noise at rate ``kappa``."""
    a_eps_eta = params.amplitude * params.epsilon * params.eta
    intrinsic = a_eps_eta / 4.0 if params.m_fold == 2 else 3.0 * a_eps_eta / 8.0
    return intrinsic + kappa * params.eta / (8.0 * params.amplitude * params.epsilon * params.gamma)


def lattice_of(params: ModelParams) -> Lattice:
    if params.m_fold == 2:
        return SQUARE
    if params.m_fold == 3:
        return HEXAGONAL
    raise ValueError("only m_fold 2 (square) and 3 (hexagonal) have a torus reduction")


def timescales(params: ModelParams, kappa: float = 0.0) -> dict:
    """``tau_trans = 1/(gamma A eps eta)`` and ``tau_decay`` from the leading small eigenvalue."""
    scale = params.gamma * params.amplitude * params.epsilon * params.eta
    rate = scale * asymptotic_rates(sigma_of(params, kappa), lattice_of(params))
    return {"tau_trans": 1.0 / scale, "tau_decay": 1.0 / rate}


def predict_rhs(obs: PeriodicObservable, sigma: float, lattice=None, max_cutoff: int | None = None) -> PeriodicObservable:
    """Apply the torus operator to ``obs``; the result needs two more modes per axis."""
    lattice = _lattice(lattice) if lattice is not None else obs.lattice
    k_out = obs.cutoff + 2
    if max_cutoff is not None and k_out > max_cutoff:
        raise ValueError(f"result needs cutoff {k_out} > allowed {max_cutoff}")
    c = obs.padded(k_out).coeffs
    k = np.arange(-k_out, k_out + 1)
    m1, m2 = np.meshgrid(k, k, indexing="ij")
    out = sigma * _diffusion_symbol(lattice, m1, m2) * c
    stencil = _SQUARE_DRIFT if lattice.kind == "square" else _HEX_DRIFT
    for (s1, s2), w1, w2 in stencil:
        flux = 0.5 * (w1 * m1 + w2 * m2) * c
        out += _shift(flux, 2 * s1, 2 * s2) - _shift(flux, -2 * s1, -2 * s2)
    return PeriodicObservable(out, lattice)


def _shift(a, d1, d2):
    """``out[i + d1, j + d2] = a[i, j]``; nothing wraps around."""
    out = np.zeros_like(a)
    n = a.shape[0]
    src1 = slice(max(0, -d1), n - max(0, d1))
    dst1 = slice(max(0, d1), n - max(0, -d1))
    src2 = slice(max(0, -d2), n - max(0, d2))
    dst2 = slice(max(0, d2), n - max(0, -d2))
    out[dst1, dst2] = a[src1, src2]
    return out


# ---------------------------------------------------------------------------
# weighted inner product


def weight(theta, sigma: float):
    return np.exp(-(1.0 - np.cos(2.0 * theta)) / (2.0 * sigma))


def gram_matrix(sigma: float, cutoff: int, n_quad: int | None = None) -> np.ndarray:
    """``W[m, n] = int w(t) e^{-imt} e^{int} dt`` by the trapezoid rule (exact for these modes)."""
    n_quad = n_quad or 8 * (2 * cutoff + 1)
    theta = 2 * np.pi * np.arange(n_quad) / n_quad
    w_hat = np.fft.fft(weight(theta, sigma)) * (2 * np.pi / n_quad)
    m = np.arange(-cutoff, cutoff + 1)
    diff = (m[:, None] - m[None, :]) % n_quad
    return w_hat[diff].real


def self_adjointness_residual(sigma: float, cutoff: int, margin: int = 2) -> float:
    """Relative ``|W T - T^t W|_F`` on modes ``|m| <= K - margin``.

    Modes within ``margin`` of the cutoff see the truncation of the drift, so
    they are excluded.
    """
    op = assemble_circle(sigma, cutoff)
    w = gram_matrix(sigma, cutoff)
    lhs = w @ op.matrix
    rhs = op.matrix.T @ w
    inner = slice(margin, 2 * cutoff + 1 - margin)
    num = np.linalg.norm((lhs - rhs)[inner, inner])
    return float(num / np.linalg.norm(lhs[inner, inner]))


def dirichlet_check(sigma: float, coeffs: np.ndarray, cutoff: int) -> tuple[float, float]:
    """Return ``(<f, T f>_w, sigma <f', f'>_w)`` for ``f`` with the given mode coefficients."""
    op = assemble_circle(sigma, cutoff)
    w = gram_matrix(sigma, cutoff)
    m = np.arange(-cutoff, cutoff + 1)
    c = np.asarray(coeffs, dtype=complex)
    tf = op.matrix @ c
    deriv = 1j * m * c
    return float((c.conj() @ w @ tf).real), float(sigma * (deriv.conj() @ w @ deriv).real)


def random_band_limited(rng: np.random.Generator, cutoff: int, band: int) -> np.ndarray:
    """Coefficients of a random real trigonometric polynomial of degree ``band``."""
    c = np.zeros(2 * cutoff + 1, dtype=complex)
    pos = rng.normal(size=band) + 1j * rng.normal(size=band)
    c[cutoff + 1 : cutoff + band + 1] = pos
    c[cutoff - band : cutoff][::-1] = pos.conj()
    c[cutoff] = rng.normal()
    return c
