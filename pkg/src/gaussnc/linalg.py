"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``.  The
mixed structure ``M_m(C) (x) M_n(C)`` is always laid out as the Kronecker
product with the ``m x m`` factor outermost, so an ``mn x mn`` matrix has
``m x m`` blocks of size ``n x n``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import tolerances as tol


class LinAlgError(ValueError):
    """Shape or structure violation in a linear-algebra routine."""


class SingularMatrixError(LinAlgError):
    """Raised when elimination meets a pivot below the singularity floor."""


@dataclass(frozen=True)
class HermEigResult:
    eigenvalues: np.ndarray
    basis: np.ndarray


def as_cmatrix(a) -> np.ndarray:
    out = np.asarray(a, dtype=complex)
    if out.ndim == 0:
        out = out.reshape(1, 1)
    if out.ndim != 2:
        raise LinAlgError(f"expected a 2-d matrix, got shape {out.shape}")
    return out


def adjoint(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def _require_square(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise LinAlgError(f"square matrix required, got shape {a.shape}")


def self_adjoint_defect(a: np.ndarray) -> float:
    """Return ``max|A - A*| / max(1, max|A|)``."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(a))))
    return float(np.max(np.abs(a - adjoint(a)))) / scale


def is_self_adjoint(a, atol: float = tol.SELF_ADJOINT) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and self_adjoint_defect(a) <= atol


def check_self_adjoint(a, what: str = "matrix") -> np.ndarray:
    a = as_cmatrix(a)
    _require_square(a)
    defect = self_adjoint_defect(a)
    if defect > tol.SELF_ADJOINT:
        raise LinAlgError(f"{what} is not self-adjoint (defect {defect:.3e})")
    return a


def imag_part(lam: np.ndarray) -> np.ndarray:
    """Matrix imaginary part ``(lam - lam*) / 2i``."""
    return (lam - adjoint(lam)) / 2j


def imag_sign(lam) -> int:
    """Return +1 if ``Im lam`` is positive definite, -1 if negative definite.

    Raises
    ------
    LinAlgError
        If the imaginary part is not definite.
    """
    lam = as_cmatrix(lam)
    w = np.linalg.eigvalsh(imag_part(lam))
    if w[0] > 0:
        return 1
    if w[-1] < 0:
        return -1
    raise LinAlgError(f"Im(lambda) is not definite (eigenvalues {w[0]:.3e} .. {w[-1]:.3e})")


# --------------------------------------------------------------------------
# Hermitian eigensolver
# --------------------------------------------------------------------------

def _householder_tridiagonalize(a: np.ndarray):
    """Reduce a Hermitian matrix to real symmetric tridiagonal form.

    Returns ``(d, e, q)`` with ``q* a q = tridiag(e, d, e)``, ``d`` and ``e``
    real, ``q`` unitary.
    """
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    q = np.eye(n, dtype=complex)
    for k in range(n - 2):
        x = a[k + 1:, k].copy()
        xnorm = np.linalg.norm(x)
        if xnorm == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        alpha = -phase * xnorm
        v = x
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        sub = a[k + 1:, k + 1:]
        p = sub @ v
        kk = np.vdot(v, p).real
        sub -= 2.0 * np.outer(v, np.conj(p)) + 2.0 * np.outer(p, np.conj(v)) - 4.0 * kk * np.outer(v, np.conj(v))
        a[k + 1:, k + 1:] = sub
        a[k + 1, k] = alpha
        a[k, k + 1] = np.conj(alpha)
        a[k + 2:, k] = 0.0
        a[k, k + 2:] = 0.0
        qs = q[:, k + 1:]
        q[:, k + 1:] = qs - 2.0 * np.outer(qs @ v, np.conj(v))
    d = np.real(np.diag(a)).copy()
    sub = np.diag(a, -1).copy()
    # rotate the complex subdiagonal onto the positive reals
    phases = np.ones(n, dtype=complex)
    for k in range(n - 1):
        if sub[k] != 0:
            phases[k + 1] = phases[k] * sub[k] / abs(sub[k])
        else:
            phases[k + 1] = phases[k]
    q = q * phases[None, :]
    e = np.zeros(n)
    e[: n - 1] = np.abs(sub)
    return d, e, q


def _tridiagonal_ql(d: np.ndarray, e: np.ndarray, z: np.ndarray) -> None:
    """Implicit-shift QL on a real symmetric tridiagonal matrix, in place.

    ``e[i]`` couples rows ``i`` and ``i+1``; ``e[-1]`` is ignored.  Columns of
    ``z`` are rotated alongside so that they end up as eigenvectors.
    """
    n = len(d)
    eps = np.finfo(float).eps
    for l in range(n):
        iterations = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            iterations += 1
            if iterations > 60:
                raise LinAlgError("QL iteration did not converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi1 = z[:, i + 1].copy()
                z[:, i + 1] = s * z[:, i] + c * zi1
                z[:, i] = c * z[:, i] - s * zi1
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0


def hermitian_eig(a, method: str = "lapack") -> HermEigResult:
    """Eigendecomposition of a self-adjoint matrix.

    Parameters
    ----------
    a : array_like
        Square self-adjoint matrix.
    method : {"lapack", "householder_ql"}
        ``"householder_ql"`` runs Householder tridiagonalisation followed by
        implicit-shift QL in this module; ``"lapack"`` delegates to
        ``numpy.linalg.eigh``.  Both are deterministic.

    Returns
    -------
    HermEigResult
        Ascending real eigenvalues and a unitary basis of eigenvectors.
    """
    a = check_self_adjoint(a)
    n = a.shape[0]
    if method == "lapack":
        w, v = np.linalg.eigh(a)
        return HermEigResult(w, v)
    if method != "householder_ql":
        raise ValueError(f"unknown eigensolver {method!r}")
    if n == 1:
        return HermEigResult(np.real(a[0]).copy(), np.eye(1, dtype=complex))
    d, e, q = _householder_tridiagonalize(0.5 * (a + adjoint(a)))
    z = np.eye(n)
    _tridiagonal_ql(d, e, z)
    order = np.argsort(d, kind="stable")
    return HermEigResult(d[order], (q @ z)[:, order])


def hermitian_eigvals(a, method: str = "lapack") -> np.ndarray:
    if method == "lapack":
        return np.linalg.eigvalsh(check_self_adjoint(a))
    return hermitian_eig(a, method).eigenvalues


def operator_norm(a) -> float:
    """Largest singular value."""
    a = as_cmatrix(a)
    if a.size == 0:
        return 0.0
    if a.shape[0] == a.shape[1] and self_adjoint_defect(a) <= tol.SELF_ADJOINT:
        w = np.linalg.eigvalsh(0.5 * (a + adjoint(a)))
        return float(max(abs(w[0]), abs(w[-1])))
    gram = adjoint(a) @ a
    top = np.linalg.eigvalsh(0.5 * (gram + adjoint(gram)))[-1]
    return float(math.sqrt(max(top, 0.0)))


def kron(a, b) -> np.ndarray:
    return np.kron(np.asarray(a), np.asarray(b))


def partial_trace_right(x, m: int, n: int, normalized: bool = True) -> np.ndarray:
    """Trace out the right ``n x n`` factor of an ``mn x mn`` matrix.

    With ``normalized`` the result is ``(id_m (x) tr_n)(x)``, otherwise the
    unnormalised ``Tr_n`` is applied.
    """
    x = np.asarray(x)
    if x.shape != (m * n, m * n):
        raise LinAlgError(f"shape {x.shape} does not factor as ({m}*{n})^2")
    out = np.einsum("iaja->ij", x.reshape(m, n, m, n))
    return out / n if normalized else out


def invert(a) -> np.ndarray:
    """Inverse by partially pivoted LU.

    Raises
    ------
    SingularMatrixError
        If a pivot falls below ``PIVOT_FLOOR * ||A||_inf``.
    """
    a = as_cmatrix(a)
    _require_square(a)
    scale = float(np.max(np.sum(np.abs(a), axis=1))) if a.size else 0.0
    if scale == 0.0:
        raise SingularMatrixError("zero matrix is singular")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a)
    smallest = float(np.min(np.abs(np.diag(lu))))
    if smallest < tol.PIVOT_FLOOR * scale:
        raise SingularMatrixError(f"pivot {smallest:.3e} below floor {tol.PIVOT_FLOOR * scale:.3e}")
    return scipy.linalg.lu_solve((lu, piv), np.eye(a.shape[0], dtype=complex))


def matrix_unit(m: int, k: int, l: int) -> np.ndarray:
    """``e_kl`` in ``M_m(C)`` with zero-based indices."""
    e = np.zeros((m, m), dtype=complex)
    e[k, l] = 1.0
    return e


def resolvent(lam, s) -> np.ndarray:
    """``(lam (x) 1_n - s)^{-1}`` for an ``m x m`` spectral parameter ``lam``."""
    lam = as_cmatrix(lam)
    s = np.asarray(s)
    n = s.shape[0] // lam.shape[0]
    return invert(np.kron(lam, np.eye(n)) - s)
