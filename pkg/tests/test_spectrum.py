import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gkpstab.fock import ModelParams
from gkpstab.observables import PeriodicObservable, cosine_series
from gkpstab.spectrum import (
    HEX_PREFACTOR,
    SQUARE_PREFACTOR,
    assemble_circle,
    assemble_torus,
    asymptotic_rates,
    dirichlet_check,
    eig_circle,
    eig_torus,
    gram_matrix,
    predict_rhs,
    random_band_limited,
    self_adjointness_residual,
    sigma_of,
    timescales,
)

# mpmath references
SQUARE_ASYM_025 = 0.023320195720225548739
HEX_ASYM_05 = 0.12117529148964281322
SIGMA_K0 = 0.074228083564459881419
SIGMA_K005 = 0.33874998877955488111
# mu_1 at sigma=0.25 from an independent finite-volume solve (20000 cells)
MU1_025_FV = 0.0204952158


def test_circle_structure():
    op = assemble_circle(0.3, 8)
    k = op.cutoff
    assert np.all(op.matrix[:, k] == 0)  # constants are annihilated
    assert op.matrix[k + 3, k + 1] == 0.5
    assert op.matrix[k - 1, k + 1] == -0.5
    band = np.abs(np.subtract.outer(np.arange(17), np.arange(17)))
    assert np.all(op.matrix[(band != 0) & (band != 2)] == 0)
    with pytest.raises(ValueError):
        assemble_circle(0.3, 3)


def test_pure_laplacian_spectrum():
    op = assemble_circle(0.2, 10, drift=0.0)
    w = np.sort(np.linalg.eigvals(op.matrix).real)
    expected = np.sort(0.2 * np.arange(-10, 11) ** 2)
    np.testing.assert_allclose(w, expected, atol=1e-13)


def test_circle_ground_state_constant():
    res = eig_circle(assemble_circle(0.25, 64), check_convergence=False)
    assert abs(res.eigenvalues[0]) < 1e-10
    v = res.eigenvectors[:, 0]
    v = v / v[64]
    v[64] = 0
    assert np.abs(v).max() < 1e-8


def test_circle_first_eigenvalue():
    res = eig_circle(assemble_circle(0.25, 128))
    mu1 = res.eigenvalues[1].real
    assert res.converged
    assert res.max_imag <= 1e-8
    assert mu1 == pytest.approx(MU1_025_FV, rel=1e-8)
    assert abs(mu1 / SQUARE_ASYM_025 - 1) <= 0.25


def test_split_matches_unsplit():
    op = assemble_circle(0.15, 40)
    a = eig_circle(op, split=True, check_convergence=False).eigenvalues
    b = eig_circle(op, split=False, check_convergence=False).eigenvalues
    np.testing.assert_allclose(np.sort(a.real)[:20], np.sort(b.real)[:20], rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("sigma", [0.05, 0.1, 0.25, 0.5])
def test_second_gap_floor(sigma):
    res = eig_circle(assemble_circle(sigma, 128), check_convergence=False)
    assert res.eigenvalues[2].real >= 0.1


def test_asymptotic_rates():
    assert asymptotic_rates(0.25, "square") == pytest.approx(SQUARE_ASYM_025, rel=1e-14)
    assert asymptotic_rates(0.5, "hex") == pytest.approx(HEX_ASYM_05, rel=1e-14)
    assert HEX_PREFACTOR / SQUARE_PREFACTOR == pytest.approx(3 * math.sqrt(3))
    with pytest.raises(ValueError):
        asymptotic_rates(0.0, "square")


def test_square_torus_is_kronecker_sum():
    K = 32
    circ = eig_circle(assemble_circle(0.25, K), check_convergence=False).eigenvalues.real
    sums = np.sort(np.add.outer(circ[:6], circ[:6]).ravel())[:6]
    tor = eig_torus(assemble_torus(0.25, "square", K), n_eigs=6).eigenvalues.real
    np.testing.assert_allclose(tor, sums, rtol=1e-9, atol=1e-12)
    dense = assemble_circle(0.25, 8).matrix
    eye = np.eye(17)
    np.testing.assert_array_equal(assemble_torus(0.25, "square", 8).matrix.toarray(), np.kron(dense, eye) + np.kron(eye, dense))


def test_hex_pure_diffusion_symbol():
    res = eig_torus(assemble_torus(0.3, "hex", 6, drift=0.0), n_eigs=13, dense=True)
    k = np.arange(-6, 7)
    m1, m2 = np.meshgrid(k, k, indexing="ij")
    symbol = np.sort((0.3 * (m1**2 - m1 * m2 + m2**2)).ravel())[:13]
    np.testing.assert_allclose(res.eigenvalues.real, symbol, atol=1e-12)


def test_hex_annihilates_constants():
    op = assemble_torus(0.25, "hex", 8)
    const = np.zeros(17 * 17)
    const[8 * 17 + 8] = 1
    assert np.abs(op.matrix @ const).max() == 0


def test_hex_cluster():
    res = eig_torus(assemble_torus(0.25, "hex", 32), n_eigs=6)
    lam = res.eigenvalues.real
    assert abs(lam[0]) < 1e-10
    assert np.ptp(lam[1:4]) / lam[1] < 0.1
    assert lam[4] / lam[3] >= 10


def test_hex_sparse_matches_dense():
    op = assemble_torus(0.3, "hex", 10)
    a = eig_torus(op, n_eigs=6).eigenvalues
    b = eig_torus(op, n_eigs=6, dense=True).eigenvalues
    np.testing.assert_allclose(a.real, b.real, rtol=1e-8, atol=1e-12)


def test_predict_rhs_constant_and_cos():
    zero = predict_rhs(PeriodicObservable.constant(), 0.3, "square")
    assert np.abs(zero.coeffs).max() == 0
    h = PeriodicObservable.separable(cosine_series({1: 1.0}), [1.0])
    out = predict_rhs(h, 0.3, "square")
    k = out.cutoff
    # (sigma - 1/2) cos t + 1/2 cos 3t
    assert out.coeffs[k + 1, k] == pytest.approx((0.3 - 0.5) / 2)
    assert out.coeffs[k - 1, k] == pytest.approx((0.3 - 0.5) / 2)
    assert out.coeffs[k + 3, k] == pytest.approx(0.25)
    assert out.coeffs[k - 3, k] == pytest.approx(0.25)
    t = np.linspace(0, 6, 13)
    direct = np.sin(2 * t) * (-np.sin(t)) + 0.3 * np.cos(t)
    np.testing.assert_allclose(out(t, 0 * t).real, direct, atol=1e-14)
    with pytest.raises(ValueError):
        predict_rhs(h, 0.3, "square", max_cutoff=2)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.0), st.sampled_from(["square", "hexagonal"]))
def test_predict_rhs_matches_matrix(seed, sigma, lattice):
    rng = np.random.default_rng(seed)
    K = 6
    c = np.zeros((2 * K + 1,) * 2, dtype=complex)
    c[2:-2, 2:-2] = rng.normal(size=(2 * K - 3,) * 2)
    obs = PeriodicObservable(c)
    pred = predict_rhs(obs, sigma, lattice).coeffs[2:-2, 2:-2]
    mat = assemble_torus(sigma, lattice, K).matrix
    np.testing.assert_allclose(pred.ravel(), mat @ c.ravel(), atol=1e-12)


def test_predict_rhs_hex_pointwise():
    sigma = 0.2
    h = PeriodicObservable.separable(cosine_series({1: 1.0}), cosine_series({1: 1.0}))
    out = predict_rhs(h, sigma, "hex")
    t1, t2 = np.meshgrid(np.linspace(0, 6, 7), np.linspace(0, 6, 7))
    d1 = -np.sin(t1) * np.cos(t2)
    d2 = -np.cos(t1) * np.sin(t2)
    d11 = -np.cos(t1) * np.cos(t2)
    d12 = np.sin(t1) * np.sin(t2)
    drift1 = np.sin(2 * t1) + 0.5 * np.sin(2 * t1 + 2 * t2) - 0.5 * np.sin(2 * t2)
    drift2 = np.sin(2 * t2) + 0.5 * np.sin(2 * t1 + 2 * t2) - 0.5 * np.sin(2 * t1)
    direct = drift1 * d1 + drift2 * d2 - sigma * (d11 - d12 + d11)
    np.testing.assert_allclose(out(t1, t2).real, direct, atol=1e-13)


def test_predict_rhs_eigenfunction():
    K = 128
    res = eig_circle(assemble_circle(0.25, K), check_convergence=False)
    v = res.eigenvectors[:, 1]
    obs = PeriodicObservable(np.outer(v, np.eye(1, 2 * K + 1, K).ravel()))
    out = predict_rhs(obs, 0.25, "square").coeffs[2:-2, 2:-2]
    lam = res.eigenvalues[1].real
    np.testing.assert_allclose(out[:, K], lam * v, atol=1e-8)


def test_self_adjointness():
    assert self_adjointness_residual(0.25, 64) <= 1e-8


def test_gram_matrix_hermitian_positive():
    w = gram_matrix(0.25, 16)
    np.testing.assert_allclose(w, w.T, atol=1e-15)
    assert np.linalg.eigvalsh(w).min() > 0


def test_dirichlet_form():
    rng = np.random.default_rng(7)
    for _ in range(20):
        lhs, rhs = dirichlet_check(0.25, random_band_limited(rng, 32, 30), 32)
        assert lhs >= 0
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_sigma_and_timescales():
    sq = ModelParams.square(0.1)
    assert sigma_of(sq) == pytest.approx(SIGMA_K0, rel=1e-14)
    assert sigma_of(sq, 0.05) == pytest.approx(SIGMA_K005, rel=1e-14)
    hx = ModelParams.hexagonal(0.1)
    assert sigma_of(hx) == pytest.approx(3 * hx.amplitude * hx.epsilon * hx.eta / 8)
    ts = timescales(sq)
    a_ee = sq.amplitude * sq.epsilon * sq.eta
    assert ts["tau_trans"] == pytest.approx(1 / a_ee)
    assert ts["tau_decay"] == pytest.approx(1 / (4 / math.pi * a_ee * math.exp(-1 / SIGMA_K0)))
    assert ts["tau_decay"] > 1e5 * ts["tau_trans"]


def test_spectrum_json(tmp_path):
    res = eig_circle(assemble_circle(0.25, 16), check_convergence=False)
    path = tmp_path / "s.json"
    res.to_json(path)
    data = json.loads(path.read_text())
    assert {"sigma", "lattice", "K", "eigenvalues", "converged"} <= set(data)
