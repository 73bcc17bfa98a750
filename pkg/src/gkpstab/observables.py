"""Periodic observables on the grid and the generalized Pauli operators.

A periodic observable is a trigonometric polynomial ``h(t1, t2)`` evaluated at
``t1 = eta/2 q1`` and ``t2 = eta/2 q2``, where ``q1``, ``q2`` are the two
lattice quadratures. Products are ordered with the ``q1`` factor on the left.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import ETA_HEXAGONAL, ETA_SQUARE, exp_iquad

ZERO_EIGENVALUE_TOL = 1e-12


@dataclass(frozen=True)
class Lattice:
    kind: str

    def __post_init__(self):
        if self.kind == "hex":
            object.__setattr__(self, "kind", "hexagonal")
        if self.kind not in ("square", "hexagonal"):
            raise ValueError(f"unknown lattice {self.kind!r}")

    @property
    def eta(self) -> float:
        return ETA_SQUARE if self.kind == "square" else ETA_HEXAGONAL

    @property
    def m_fold(self) -> int:
        return 2 if self.kind == "square" else 3

    @property
    def angles(self) -> tuple[float, float]:
        """Directions of ``q1`` and ``q2`` as angles in phase space."""
        return (0.0, math.pi / 2) if self.kind == "square" else (0.0, 2 * math.pi / 3)

    def directions(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """``(c_q, c_p)`` pairs with ``q_i = c_q q + c_p p``."""
        return tuple((math.cos(a), math.sin(a)) for a in self.angles)


SQUARE = Lattice("square")
HEXAGONAL = Lattice("hexagonal")


@dataclass(frozen=True)
class PeriodicObservable:
    """Fourier coefficients ``coeffs[m1 + K, m2 + K]`` of a 2D trigonometric polynomial.

    Separable observables ``f(t1) g(t2)`` are built with :meth:`separable`.
    """

    coeffs: np.ndarray
    lattice: Lattice = SQUARE

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] % 2 == 0:
            raise ValueError("coeffs must be a square (2K+1) x (2K+1) array")
        object.__setattr__(self, "coeffs", c)

    @property
    def cutoff(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @classmethod
    def separable(cls, f_hat, g_hat, lattice: Lattice = SQUARE) -> "PeriodicObservable":
        f_hat, g_hat = np.asarray(f_hat, dtype=complex), np.asarray(g_hat, dtype=complex)
        k = max(len(f_hat), len(g_hat)) // 2
        return cls(np.outer(_pad(f_hat, k), _pad(g_hat, k)), lattice)

    @classmethod
    def constant(cls, value=1.0, lattice: Lattice = SQUARE) -> "PeriodicObservable":
        return cls(np.array([[value]], dtype=complex), lattice)

    def padded(self, cutoff: int) -> "PeriodicObservable":
        k = self.cutoff
        if cutoff < k:
            raise ValueError("cannot pad to a smaller cutoff")
        out = np.zeros((2 * cutoff + 1,) * 2, dtype=complex)
        out[cutoff - k : cutoff + k + 1, cutoff - k : cutoff + k + 1] = self.coeffs
        return PeriodicObservable(out, self.lattice)

    def is_real(self, tol: float = 1e-12) -> bool:
        c = self.coeffs
        return bool(np.abs(c - np.conj(c[::-1, ::-1])).max() <= tol * max(np.abs(c).max(), 1.0))

    def __call__(self, t1, t2):
        k = np.arange(-self.cutoff, self.cutoff + 1)
        e1 = np.exp(1j * np.multiply.outer(np.asarray(t1), k))
        e2 = np.exp(1j * np.multiply.outer(np.asarray(t2), k))
        return np.einsum("...i,ij,...j->...", e1, self.coeffs, e2)


def _pad(c, k):
    """Center a length ``2j+1`` coefficient vector in a length ``2k+1`` one."""
    if len(c) % 2 == 0:
        raise ValueError("Fourier coefficient vectors must have odd length 2K+1")
    j = len(c) // 2
    out = np.zeros(2 * k + 1, dtype=complex)
    out[k - j : k + j + 1] = c
    return out


def cosine_series(coeffs_by_mode: dict, cutoff: int | None = None) -> np.ndarray:
    """Coefficients of ``sum_m a_m cos(m t)`` laid out on modes ``-K..K``."""
    k = cutoff if cutoff is not None else max(coeffs_by_mode, default=0)
    out = np.zeros(2 * k + 1, dtype=complex)
    for m, a in coeffs_by_mode.items():
        if m == 0:
            out[k] += a
        else:
            out[k + m] += a / 2
            out[k - m] += a / 2
    return out


def sign_cos_coefficients(n_terms: int) -> np.ndarray:
    """Square-wave series ``(4/pi) sum_j (-1)^j cos((2j+1) t) / (2j+1)``, first ``n_terms``."""
    return cosine_series({2 * j + 1: 4 / math.pi * (-1) ** j / (2 * j + 1) for j in range(n_terms)})


def mode_exponentials(lattice: Lattice, cutoff: int, dim: int, axis: int) -> list[np.ndarray]:
    """``exp(i m eta/2 q_axis)`` for ``m = -K..K``, built from the closed-form displacement."""
    angle = lattice.angles[axis]
    half = lattice.eta / 2.0
    pos = [exp_iquad(m * half, angle, dim) for m in range(1, cutoff + 1)]
    return [op.conj().T for op in pos[::-1]] + [np.eye(dim, dtype=complex)] + pos


def build_periodic_operator(obs: PeriodicObservable, dim: int) -> np.ndarray:
    k = obs.cutoff
    c = obs.coeffs
    rows = np.flatnonzero(np.abs(c).max(axis=1) > 0)
    cols = np.flatnonzero(np.abs(c).max(axis=0) > 0)
    out = np.zeros((dim, dim), dtype=complex)
    if rows.size == 0:
        return out
    e1 = mode_exponentials(obs.lattice, k, dim, 0)
    e2 = mode_exponentials(obs.lattice, k, dim, 1)
    for i in rows:
        right = sum(c[i, j] * e2[j] for j in cols)
        out += e1[i] @ right
    return out


# ---------------------------------------------------------------------------
# Pauli operators


def matrix_sign(op: np.ndarray) -> np.ndarray:
    """``sign`` of a hermitian matrix, mapping near-zero eigenvalues to +1."""
    herm = 0.5 * (op + op.conj().T)
    w, v = np.linalg.eigh(herm)
    s = np.where(w < -ZERO_EIGENVALUE_TOL, -1.0, 1.0)
    out = (v * s) @ v.conj().T
    return 0.5 * (out + out.conj().T)


@dataclass(frozen=True)
class PauliSet:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    lattice: Lattice

    def as_dict(self) -> dict:
        return {"X": self.x, "Y": self.y, "Z": self.z}


def _axis_observable(lattice, axis, f_hat):
    one = np.array([1.0])
    pair = (f_hat, one) if axis == 0 else (one, f_hat)
    return PeriodicObservable.separable(*pair, lattice=lattice)


def build_pauli(lattice: Lattice | str, dim: int, sign_method: str = "eigen", n_terms: int = 25) -> PauliSet:
    """``Z = sign(cos(eta/2 q1))``, ``X = sign(cos(eta/2 q2))``, ``Y = -i Z X``.

    ``Y`` is returned as the hermitian part of ``-i Z X``; the two coincide
    when ``X`` and ``Z`` anticommute, which holds only up to truncation.
    ``sign_method`` is ``"eigen"`` or ``"fourier"`` (``n_terms`` square-wave terms).
    """
    if isinstance(lattice, str):
        lattice = Lattice(lattice)
    ops = []
    for axis in (0, 1):
        if sign_method == "eigen":
            ops.append(matrix_sign(build_periodic_operator(_axis_observable(lattice, axis, cosine_series({1: 1.0})), dim)))
        elif sign_method == "fourier":
            op = build_periodic_operator(_axis_observable(lattice, axis, sign_cos_coefficients(n_terms)), dim)
            ops.append(0.5 * (op + op.conj().T))
        else:
            raise ValueError(f"unknown sign_method {sign_method!r}")
    z, x = ops
    zx = z @ x
    y = -0.5j * (zx - zx.conj().T)
    return PauliSet(x=x, y=y, z=z, lattice=lattice)


def bloch(rho: np.ndarray, paulis: PauliSet, tol: float = 1e-8) -> tuple[float, float, float]:
    if rho.shape != paulis.x.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {paulis.x.shape}")
    out = []
    for op in (paulis.x, paulis.y, paulis.z):
        val = np.sum(op.T * rho)
        if abs(val.imag) > tol:
            raise ValueError(f"imaginary expectation {val.imag:.3g}: state or operator not hermitian")
        out.append(float(val.real))
    return tuple(out)


def low_block(op: np.ndarray, size: int | None = None) -> np.ndarray:
    """Top-left block on the lowest ``size`` Fock states (default half)."""
    size = op.shape[0] // 2 if size is None else size
    return op[:size, :size]
