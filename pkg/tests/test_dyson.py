import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaussnc.correction import ensemble_model
from gaussnc.dyson import (
    DirectionalSolver,
    L_of,
    R_of,
    boundary_density,
    correction_chain,
    default_grid,
    density_and_support,
    l_of,
    richardson_weights,
    semicircle_g,
    semicircle_g_prime,
    solve_G,
    solve_G_batch,
    solve_G_directional,
)
from gaussnc.linalg import LinAlgError, imag_part
from gaussnc.ncpoly import CircularModel, scalar_model
from oracles import (
    GOE_L_25,
    GOE_R_25,
    GOESTAR_L_25,
    GOESTAR_R_25,
    GSE_l_25,
    GSE_R_25,
    SEMI_DENSITY_0,
    SEMI_G_25,
    SEMI_G_I,
    SEMI_GPRIME_25,
)

SEMI = scalar_model()
# 2.5 lies outside the spectrum; a tiny imaginary part selects the upper branch
Z25 = 2.5 + 1e-14j
NONNORMAL = CircularModel(np.diag([0.5, -0.5]), (np.array([[0, 1], [0, 0]]),
                                                 np.array([[0.3, 0.2j], [0.1, -0.4 + 0.1j]])))


def _dyson_residual(model, lam, G):
    return np.linalg.norm(lam - model.a0 - model.eta(G) - np.linalg.inv(G))


def test_semicircle_closed_forms():
    assert solve_G(SEMI, Z25).G[0, 0] == pytest.approx(SEMI_G_25, abs=1e-12)
    assert complex(semicircle_g(2.5)) == pytest.approx(SEMI_G_25)
    assert complex(semicircle_g_prime(2.5)) == pytest.approx(SEMI_GPRIME_25)
    assert solve_G(SEMI, 1j).G[0, 0] == pytest.approx(SEMI_G_I, abs=1e-12)


@given(st.floats(-4, 4), st.floats(0.01, 4), st.booleans())
def test_scalar_solver_matches_semicircle(x, y, lower):
    z = complex(x, -y if lower else y)
    g = solve_G(SEMI, z).G[0, 0]
    assert g == pytest.approx(complex(semicircle_g(z)), abs=1e-9)


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 3))
def test_matrix_solver_herglotz_and_residual(seed, y):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    lam = (h + h.conj().T) / 2 + 1j * y * np.eye(2)
    pt = solve_G(NONNORMAL, lam)
    assert _dyson_residual(NONNORMAL, lam, pt.G) < 1e-9
    assert np.linalg.eigvalsh(imag_part(pt.G)).max() < 0
    lower = solve_G(NONNORMAL, lam.conj().T).G
    np.testing.assert_allclose(lower, pt.G.conj().T, atol=1e-9)


def test_batch_with_mixed_signs():
    lam = np.array([1 + 0.5j, 1 - 0.5j, -2 + 1j])
    G, res, _ = solve_G_batch(SEMI, lam)
    np.testing.assert_allclose(G[:, 0, 0], semicircle_g(lam), atol=1e-10)
    assert np.all(res < 1e-10)


def test_indefinite_lambda_rejected():
    with pytest.raises(LinAlgError):
        solve_G(NONNORMAL, np.diag([1j, -1j]))


def test_directional_derivative_finite_difference():
    lam = np.array([[0.3 + 0.8j, 0.1], [0.1, -0.2 + 0.6j]])
    d = np.array([[0.2, 0.1j], [-0.1j, 0.3]])
    h = 1e-6
    fd = (solve_G(NONNORMAL, lam + h * d).G - solve_G(NONNORMAL, lam - h * d).G) / (2 * h)
    np.testing.assert_allclose(solve_G_directional(NONNORMAL, lam, d), fd, atol=1e-7)
    pt = solve_G(NONNORMAL, lam)
    many = DirectionalSolver(NONNORMAL, pt.G[None]).solve(np.stack([d, 2 * d])[None])
    np.testing.assert_allclose(many[0, 1], 2 * many[0, 0], atol=1e-12)


def test_scalar_derivative():
    assert solve_G_directional(SEMI, Z25, np.eye(1))[0, 0] == pytest.approx(SEMI_GPRIME_25, abs=1e-10)


@pytest.mark.parametrize("kind,R,L", [("goe", GOE_R_25, GOE_L_25), ("goe_star", GOESTAR_R_25, GOESTAR_L_25)])
def test_correction_chain_scalar(kind, R, L):
    model = ensemble_model(kind)
    assert R_of(model, Z25)[0, 0] == pytest.approx(R, abs=1e-10)
    assert L_of(model, Z25)[0, 0] == pytest.approx(L, abs=1e-10)


def test_correction_chain_gse():
    model = ensemble_model("gse")
    np.testing.assert_allclose(R_of(model, Z25 * np.eye(2)), GSE_R_25 * np.eye(2), atol=1e-10)
    assert l_of(model, Z25) == pytest.approx(GSE_l_25, abs=1e-10)


def test_sgrm_has_no_correction():
    assert abs(l_of(ensemble_model("sgrm"), Z25)) < 1e-12


def test_l_equals_derivative_identity():
    # L = -G'[R G^{-1}]; for the scalar GOE model at real z this is -G' R / G
    z = Z25
    model = ensemble_model("goe")
    ch = correction_chain(model, np.array([z]))
    expect = -SEMI_GPRIME_25 * ch.R[0, 0, 0] / SEMI_G_25
    assert ch.L[0, 0, 0] == pytest.approx(expect, abs=1e-10)


def test_richardson_weights():
    etas = (0.1, 0.05, 0.025)
    w = richardson_weights(etas)
    assert w.sum() == pytest.approx(1.0)
    f = lambda e: 3.0 + 2.0 * e - 5.0 * e ** 2
    assert sum(wk * f(e) for wk, e in zip(w, etas)) == pytest.approx(3.0)


def test_semicircle_density_and_support():
    prof = density_and_support(SEMI)
    assert len(prof.support_intervals) == 1
    lo, hi = prof.support_intervals[0]
    assert lo == pytest.approx(-2, abs=2e-3) and hi == pytest.approx(2, abs=2e-3)
    i0 = np.argmin(np.abs(prof.grid))
    assert prof.density[i0] == pytest.approx(SEMI_DENSITY_0, abs=1e-4)
    assert prof.integral() == pytest.approx(1.0, abs=2e-3)
    assert prof.moment(2) == pytest.approx(1.0, abs=2e-3)
    assert bool(prof.contains([2.2], 0.3)[0]) and not bool(prof.contains([2.4], 0.3)[0])
    assert prof.support_flag().sum() > 0


def test_boundary_density_semicircle():
    xs = np.array([-1.5, 0.0, 1.0, 2.5])
    expect = np.sqrt(np.clip(4 - xs ** 2, 0, None)) / (2 * math.pi)
    np.testing.assert_allclose(boundary_density(SEMI, xs), expect, atol=1e-7)


def test_grid_must_cover_spectrum():
    with pytest.raises(ValueError):
        density_and_support(SEMI, grid=np.linspace(-1, 1, 11))


def test_default_grid():
    g = default_grid(SEMI, 0.01)
    bound = SEMI.spectral_radius_bound + 1
    assert g[0] == pytest.approx(-bound) and g[-1] == pytest.approx(bound)
