import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaussnc import tolerances as tol
from gaussnc.linalg import (
    LinAlgError,
    SingularMatrixError,
    hermitian_eig,
    hermitian_eigvals,
    imag_sign,
    invert,
    matrix_unit,
    operator_norm,
    partial_trace_right,
    resolvent,
)
from helpers import random_hermitian


@given(st.integers(1, 24), st.integers(0, 2**32 - 1), st.sampled_from(["lapack", "householder_ql"]))
def test_eigen_reconstruction(n, seed, method):
    a = random_hermitian(np.random.default_rng(seed), n)
    res = hermitian_eig(a, method)
    v, w = res.basis, res.eigenvalues
    scale = max(1.0, np.linalg.norm(a, 2))
    assert np.all(np.diff(w) >= 0)
    assert np.linalg.norm(a @ v - v * w) <= tol.EIG_RECONSTRUCTION * scale * n
    assert np.linalg.norm(v.conj().T @ v - np.eye(n)) <= 1e-10 * n


@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_ql_matches_lapack(n, seed):
    a = random_hermitian(np.random.default_rng(seed), n)
    np.testing.assert_allclose(hermitian_eigvals(a, "householder_ql"), np.linalg.eigvalsh(a), atol=1e-11)


def test_eig_real_symmetric_and_degenerate():
    a = np.diag([2.0, 2.0, -1.0, 0.0])
    w = hermitian_eig(a, "householder_ql").eigenvalues
    np.testing.assert_allclose(w, [-1, 0, 2, 2], atol=1e-14)


def test_eig_rejects_non_self_adjoint():
    with pytest.raises(LinAlgError):
        hermitian_eig(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        hermitian_eig(np.eye(2), method="jacobi")


def test_operator_norm_nonnormal():
    assert operator_norm(matrix_unit(2, 0, 1)) == pytest.approx(1.0)
    assert operator_norm(np.diag([-3.0, 2.0])) == pytest.approx(3.0)


@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_partial_trace_of_kron(m, n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    out = partial_trace_right(np.kron(a, b), m, n)
    np.testing.assert_allclose(out, a * np.trace(b) / n, atol=1e-12)
    raw = partial_trace_right(np.kron(a, b), m, n, normalized=False)
    np.testing.assert_allclose(raw, a * np.trace(b), atol=1e-12)


def test_partial_trace_shape_error():
    with pytest.raises(LinAlgError):
        partial_trace_right(np.eye(6), 4, 2)


def test_invert_and_singular():
    a = np.array([[2.0, 1.0], [1.0, 3.0]])
    np.testing.assert_allclose(invert(a) @ a, np.eye(2), atol=1e-14)
    with pytest.raises(SingularMatrixError):
        invert(np.array([[1.0, 2.0], [2.0, 4.0]]))


@given(st.integers(1, 12), st.floats(0.05, 5.0), st.floats(-5, 5), st.integers(0, 2**32 - 1))
def test_resolvent_bound(n, y, x, seed):
    s = random_hermitian(np.random.default_rng(seed), n)
    r = resolvent(np.array([[x + 1j * y]]), s)
    assert np.linalg.norm(r, 2) <= 1 / y * (1 + 1e-10)


def test_imag_sign():
    assert imag_sign(np.array([[1j]])) == 1
    assert imag_sign(np.diag([-1j, -2j])) == -1
    with pytest.raises(LinAlgError):
        imag_sign(np.diag([1j, -1j]))
