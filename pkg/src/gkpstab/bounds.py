"""Closed-form energy bounds for the stabilized oscillator.

The photon number obeys ``d<N>/dt <= -lam <N> + mu`` for every proof
parameter ``r`` in (0, 1), provided ``eps eta / 2 < 0.4``. Integrating gives
the bound curve ``exp(-lam t) N0 + (1 - exp(-lam t)) mu / lam``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import ModelParams

VALIDITY_LIMIT = 0.4
R_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))


class InvalidBoundParams(ValueError):
    pass


def phi(epsilon: float, eta: float) -> float:
    """``(2 - eps eta/2) exp(-eps eta/2) - 1``."""
    half = epsilon * eta / 2.0
    return (2.0 - half) * math.exp(-half) - 1.0


@dataclass(frozen=True)
class EnergyBoundParams:
    r: float
    epsilon: float
    eta: float
    m_fold: int
    gamma: float = 1.0

    @classmethod
    def from_model(cls, params: ModelParams, r: float) -> "EnergyBoundParams":
        return cls(r=r, epsilon=params.epsilon, eta=params.eta, m_fold=params.m_fold, gamma=params.gamma)

    @property
    def valid(self) -> bool:
        return self.epsilon * self.eta / 2.0 < VALIDITY_LIMIT and 0.0 < self.r < 1.0


@dataclass(frozen=True)
class BoundCurve:
    lam: float
    mu: float
    n0: float

    @property
    def c(self) -> float:
        return self.mu / self.lam

    def __call__(self, t):
        decay = np.exp(-self.lam * np.asarray(t, dtype=float))
        return decay * self.n0 + (1.0 - decay) * self.c


def coefficients(p: EnergyBoundParams) -> tuple[float, float]:
    """Return ``(lam, mu)`` of the differential inequality."""
    if not p.valid:
        raise InvalidBoundParams(
            f"bound requires eps*eta/2 < {VALIDITY_LIMIT} and r in (0,1); got "
            f"eps*eta/2={p.epsilon * p.eta / 2:.4g}, r={p.r}"
        )
    eps, eta, r = p.epsilon, p.eta, p.r
    amp = math.exp(-eps * eta / 2.0)
    ph = phi(eps, eta)
    pref = p.m_fold * p.gamma * amp
    lam = 2.0 * pref * r * eps * eta * ph
    mu = pref * (
        (eps**2 + eta**2) * amp
        + eps * eta**3 / 2.0
        + eps / (2.0 * eta * (1.0 - r) * ph)
        - r * eps * eta * ph
    )
    return lam, mu


def steady_energy(p: EnergyBoundParams) -> float:
    lam, mu = coefficients(p)
    return mu / lam


def bound_curve(p: EnergyBoundParams, n0: float) -> BoundCurve:
    if not (math.isfinite(n0) and n0 >= 0):
        raise ValueError(f"initial energy must be finite and >= 0, got {n0!r}")
    lam, mu = coefficients(p)
    return BoundCurve(lam=lam, mu=mu, n0=n0)


def bound_at(t, p: EnergyBoundParams, n0: float):
    return bound_curve(p, n0)(t)


def best_r(params: ModelParams, r_grid=R_GRID) -> float:
    """Grid point minimizing the steady-state energy bound."""
    values = [steady_energy(EnergyBoundParams.from_model(params, r)) for r in r_grid]
    return float(r_grid[int(np.argmin(values))])


def recommend_truncation(params: ModelParams, headroom: float = 8.0, r_grid=R_GRID) -> int:
    if headroom < 1:
        raise ValueError("headroom must be >= 1")
    c_min = min(steady_energy(EnergyBoundParams.from_model(params, r)) for r in r_grid)
    return int(math.ceil(headroom * c_min))


def asymptotic_coefficients(params: ModelParams, r: float) -> tuple[float, float]:
    """Small-eps forms ``lam ~ 2 r M gamma eps eta`` and ``C ~ eta / (2 r eps)``."""
    lam = 2.0 * r * params.m_fold * params.gamma * params.epsilon * params.eta
    return lam, params.eta / (2.0 * r * params.epsilon)


def adjoint_dissipator(jump: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Heisenberg-picture dissipator in commutator form, ``1/2 L^dag [O, L] + h.c.``."""
    half = 0.5 * jump.conj().T @ (obs @ jump - jump @ obs)
    return half + half.conj().T


def inequality_operator(params: ModelParams, r: float, dim: int) -> np.ndarray:
    """``sum_k gamma D*[L_k](N) + lam N - mu``; negative semidefinite where the bound holds."""
    from .fock import number

    lam, mu = coefficients(EnergyBoundParams.from_model(params, r))
    n_op = number(dim)
    total = sum(params.gamma * adjoint_dissipator(op, n_op) for op in _quiet_ops(params, dim))
    return total + lam * n_op - mu * np.eye(dim)


def _quiet_ops(params, dim):
    import warnings

    from .fock import TruncationWarning, lindblad_ops

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        return lindblad_ops(params, dim)
