"""Truncated Fock-basis operators for a single oscillator mode.

Operators are plain dense ``complex128`` arrays of shape ``(dim, dim)`` with
entry ``[m, n] = <m|O|n>``. Every builder is a pure function of its inputs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import gammaln

SQRT_PI = math.sqrt(math.pi)
ETA_SQUARE = 2.0 * SQRT_PI
ETA_HEXAGONAL = 2.0 * math.sqrt(2.0 * math.pi / math.sqrt(3.0))


class TruncationWarning(UserWarning):
    """Raised when a Fock truncation is below the recommended dimension."""


@dataclass(frozen=True)
class TruncationConfig:
    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"dim must be an integer >= 2, got {self.dim!r}")


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the stabilizing dissipators.

    Attributes
    ----------
    epsilon : float
        Regularization strength (first-order envelope parameter).
    eta : float
        Displacement length of the stabilizers.
    m_fold : int
        Rotation order; ``2 * m_fold`` dissipators at angles ``k pi / m_fold``.
    gamma : float
        Overall rate multiplying every stabilizing dissipator.
    """

    epsilon: float
    eta: float
    m_fold: int
    gamma: float = 1.0

    def __post_init__(self):
        if not (self.epsilon > 0 and self.eta > 0 and self.gamma > 0):
            raise ValueError("epsilon, eta and gamma must be positive")
        if int(self.m_fold) != self.m_fold or self.m_fold < 1:
            raise ValueError("m_fold must be an integer >= 1")

    @property
    def amplitude(self) -> float:
        return math.exp(-self.epsilon * self.eta / 2.0)

    @property
    def n_dissipators(self) -> int:
        return 2 * self.m_fold

    @property
    def tau_trans(self) -> float:
        """Fast relaxation time ``1 / (A eps eta)``."""
        return 1.0 / (self.amplitude * self.epsilon * self.eta)

    @classmethod
    def square(cls, epsilon: float, gamma: float = 1.0) -> "ModelParams":
        return cls(epsilon=epsilon, eta=ETA_SQUARE, m_fold=2, gamma=gamma)

    @classmethod
    def hexagonal(cls, epsilon: float, gamma: float = 1.0) -> "ModelParams":
        return cls(epsilon=epsilon, eta=ETA_HEXAGONAL, m_fold=3, gamma=gamma)


def _dim(cfg) -> int:
    dim = cfg.dim if isinstance(cfg, TruncationConfig) else int(cfg)
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    return dim


def ladder(cfg) -> np.ndarray:
    """Annihilation operator, ``<n-1|a|n> = sqrt(n)``."""
    dim = _dim(cfg)
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def quadratures(cfg) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(q, p)`` with ``q = (a + a^dag)/sqrt2`` and ``p = (a - a^dag)/(i sqrt2)``."""
    a = ladder(cfg)
    ad = a.conj().T
    return (a + ad) / math.sqrt(2.0), (a - ad) / (1j * math.sqrt(2.0))


def number(cfg) -> np.ndarray:
    return np.diag(np.arange(_dim(cfg), dtype=float)).astype(complex)


def rotation(theta: float, cfg) -> np.ndarray:
    """Phase-space rotation ``exp(i theta N)`` (diagonal)."""
    return np.diag(np.exp(1j * theta * np.arange(_dim(cfg))))


def rotate(op: np.ndarray, theta: float) -> np.ndarray:
    """Conjugate ``exp(i theta N) op exp(-i theta N)`` by entrywise phases."""
    n = np.arange(op.shape[0])
    return op * np.exp(1j * theta * (n[:, None] - n[None, :]))


def _normalized_laguerre_table(x: float, dim: int) -> np.ndarray:
    """Table ``G[n, k] = sqrt(n!/(n+k)!) x^(k/2) exp(-x/2) L_n^(k)(x)``.

    Built by the three-term recurrence in ``n``, run on the normalized values
    so nothing overflows at large ``n`` or ``k``.
    """
    k = np.arange(dim, dtype=float)
    table = np.zeros((dim, dim))
    table[0] = np.exp(0.5 * k * math.log(x) - 0.5 * x - 0.5 * gammaln(k + 1.0))
    if dim > 1:
        table[1] = (1.0 + k - x) / np.sqrt(k + 1.0) * table[0]
    for n in range(1, dim - 1):
        table[n + 1] = (
            (2 * n + 1 + k - x) * table[n] - np.sqrt(n * (n + k)) * table[n - 1]
        ) / np.sqrt((n + 1) * (n + 1 + k))
    return table


def displacement(alpha: complex, cfg) -> np.ndarray:
    """Matrix elements ``<m|D(alpha)|n>`` of the displacement operator.

    These are the exact elements of the infinite-dimensional operator, so the
    result is the Galerkin projection of ``D(alpha)`` onto the first ``dim``
    Fock states.
    """
    dim = _dim(cfg)
    x = abs(alpha) ** 2
    if x == 0.0:
        return np.eye(dim, dtype=complex)
    table = _normalized_laguerre_table(x, dim)
    m, n = np.indices((dim, dim))
    offset = np.abs(m - n)
    values = table[np.minimum(m, n), offset]
    unit = alpha / abs(alpha)
    phase = np.where(m >= n, unit**offset, (-np.conj(unit)) ** offset)
    return values * phase


def exp_iq(beta: float, cfg, method: str = "laguerre") -> np.ndarray:
    """Truncated ``exp(i beta q)``.

    ``method="laguerre"`` uses displacement matrix elements with
    ``alpha = i beta / sqrt2``; ``method="expm"`` exponentiates the truncated
    ``i beta q`` and is kept as a cross-check.
    """
    return exp_iquad(beta, 0.0, cfg, method=method)


def exp_iquad(beta: float, angle: float, cfg, method: str = "laguerre") -> np.ndarray:
    """Truncated ``exp(i beta q_angle)`` with ``q_angle = cos(angle) q + sin(angle) p``."""
    if not math.isfinite(beta) or not math.isfinite(angle):
        raise ValueError(f"beta and angle must be finite, got {beta!r}, {angle!r}")
    dim = _dim(cfg)
    if method == "laguerre":
        return rotate(displacement(1j * beta / math.sqrt(2.0), dim), angle)
    if method == "expm":
        q, p = quadratures(dim)
        return scipy.linalg.expm(1j * beta * (math.cos(angle) * q + math.sin(angle) * p))
    raise ValueError(f"unknown method {method!r}")


def recommended_dim(params: ModelParams, headroom: float = 8.0) -> int:
    # deferred import: bounds depends on this module
    from .bounds import recommend_truncation

    return recommend_truncation(params, headroom=headroom)


def lindblad_ops(params: ModelParams, cfg, method: str = "laguerre") -> list[np.ndarray]:
    """The ``2M`` stabilizers ``L_k = R_k L_0 R_k^dag`` at angles ``k pi / M``.

    ``L_0 = A exp(i eta q) (1 - eps p) - 1``. The rate ``gamma`` is not folded
    in; it is applied by the master equation.
    """
    dim = _dim(cfg)
    try:
        rec = recommended_dim(params)
    except ValueError:
        rec = None
    if rec is not None and dim < rec:
        warnings.warn(
            f"dim={dim} is below the recommended truncation {rec}", TruncationWarning, stacklevel=2
        )
    base = stabilizer_base(params, dim, method=method)
    m = params.m_fold
    return [rotate(base, k * math.pi / m) for k in range(2 * m)]


def stabilizer_base(params: ModelParams, cfg, method: str = "laguerre") -> np.ndarray:
    """``L_0`` alone."""
    dim = _dim(cfg)
    _, p = quadratures(dim)
    eye = np.eye(dim)
    return params.amplitude * exp_iq(params.eta, dim, method=method) @ (eye - params.epsilon * p) - eye
