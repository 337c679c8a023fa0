"""Operator-valued semicircular fixed-point equation and its derived objects.

For a circular model ``s = a0 (x) 1 + sum_j (a_j (x) y_j + a_j^* (x) y_j^*)``
the ``m x m`` resolvent ``G(lam) = (id (x) tau)[(lam (x) 1 - s)^{-1}]`` solves

    lam = a0 + eta(G) + G^{-1},    eta(G) = sum_j (a_j G a_j^* + a_j^* G a_j)

for ``Im lam`` positive or negative definite.  Everything here works on
batches: spectral parameters of shape ``(B, m, m)`` are solved together with
vectorised damped iteration and Newton polishing.

Vectorisation convention: ``vec`` is row-major, so
``vec(A X B) = kron(A, B^T) vec(X)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tolerances as tol
from .linalg import LinAlgError, adjoint, imag_part, matrix_unit
from .ncpoly import CircularModel


class ConvergenceError(RuntimeError):
    """Fixed-point iteration did not reach the residual tolerance.

    Attributes
    ----------
    residual : float
        Last residual of the worst batch element.
    index : int
        Batch position of that element.
    """

    def __init__(self, message, residual=math.nan, index=-1):
        super().__init__(message)
        self.residual = residual
        self.index = index


class ConditioningError(RuntimeError):
    """Linearised equation too ill-conditioned to solve."""


@dataclass(frozen=True)
class ResolventPoint:
    """Solution of the fixed-point equation at one spectral parameter."""

    lam: np.ndarray
    G: np.ndarray
    iterations: int
    residual: float


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _as_lambda(lam, m: int) -> np.ndarray:
    """Promote a scalar, an ``m x m`` matrix or a stack to shape ``(B, m, m)``."""
    lam = np.asarray(lam, dtype=complex)
    if lam.ndim == 0:
        return lam * np.eye(m)[None]
    if lam.ndim == 1:
        return lam[:, None, None] * np.eye(m)[None]
    if lam.ndim == 2:
        if lam.shape != (m, m):
            raise LinAlgError(f"lambda has shape {lam.shape}, model needs ({m}, {m})")
        return lam[None]
    if lam.shape[1:] != (m, m):
        raise LinAlgError(f"lambda stack has shape {lam.shape}, model needs (B, {m}, {m})")
    return lam


def _imag_signs(lam: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(imag_part(lam))
    signs = np.zeros(len(lam), dtype=int)
    signs[w[:, 0] > 0] = 1
    signs[w[:, -1] < 0] = -1
    if np.any(signs == 0):
        bad = int(np.argmax(signs == 0))
        raise LinAlgError(f"Im(lambda) is not definite at batch index {bad}")
    return signs


def _bkron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched Kronecker product of ``(B, p, q)`` and ``(B, r, s)`` stacks."""
    B, p, q = a.shape
    _, r, s = b.shape
    return np.einsum("bij,bkl->bikjl", a, b).reshape(B, p * r, q * s)


def _residual(model: CircularModel, lam, G) -> np.ndarray:
    phi = model.a0 + model.eta(G) + np.linalg.inv(G) - lam
    return np.linalg.norm(phi, axis=(1, 2))


def _scale(lam) -> np.ndarray:
    return np.maximum(1.0, np.linalg.norm(lam, ord=2, axis=(1, 2)))


def _herglotz_ok(G) -> np.ndarray:
    """``Im G`` negative definite for each batch element."""
    return np.linalg.eigvalsh(imag_part(G))[:, -1] < 0


def _eta_kron(model: CircularModel) -> np.ndarray:
    """Matrix of ``G -> eta(G)`` acting on row-major ``vec G``."""
    m = model.m
    out = np.zeros((m * m, m * m), dtype=complex)
    for aj in model.a:
        out += np.kron(aj, np.conj(aj)) + np.kron(adjoint(aj), aj.T)
    return out


# --------------------------------------------------------------------------
# core batched solver (upper half-plane)
# --------------------------------------------------------------------------

def _damped(model, lam, G, target, max_iter, alpha0=0.5):
    """Damped iteration ``G <- (1-a) G + a (lam - a0 - eta(G))^{-1}``.

    The step ``a`` starts at ``alpha0`` per element, is halved whenever the
    residual grows and relaxed back towards ``alpha0`` on success.
    """
    B = len(lam)
    alpha = np.full(B, alpha0)
    res = _residual(model, lam, G)
    active = res > target
    its = np.zeros(B, dtype=int)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        Ga = G[idx]
        F = np.linalg.inv(lam[idx] - model.a0 - model.eta(Ga))
        a = alpha[idx][:, None, None]
        cand = (1 - a) * Ga + a * F
        rc = _residual(model, lam[idx], cand)
        better = (rc <= res[idx]) | (rc <= target[idx])
        ok_idx = idx[better]
        G[ok_idx] = cand[better]
        res[ok_idx] = rc[better]
        alpha[ok_idx] = np.minimum(alpha0, alpha[ok_idx] * 1.25)
        alpha[idx[~better]] *= 0.5
        its[idx] += 1
        stuck = alpha < 1e-6
        active = (res > target) & ~stuck
    return G, res, its


def _newton(model, lam, G, target, max_iter=30, ek=None):
    """Newton iteration on ``Phi(G) = a0 + eta(G) + G^{-1} - lam`` with backtracking."""
    B, m, _ = lam.shape
    ek = _eta_kron(model) if ek is None else ek
    res = _residual(model, lam, G)
    its = np.zeros(B, dtype=int)
    active = res > target
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        Ga = G[idx]
        Ginv = np.linalg.inv(Ga)
        phi = model.a0 + model.eta(Ga) + Ginv - lam[idx]
        J = ek[None] - _bkron(Ginv, np.swapaxes(Ginv, 1, 2))
        try:
            step = np.linalg.solve(J, -phi.reshape(len(idx), m * m, 1)).reshape(len(idx), m, m)
        except np.linalg.LinAlgError:
            break
        t = np.ones(len(idx))
        accepted = np.zeros(len(idx), dtype=bool)
        newG = Ga.copy()
        newr = res[idx].copy()
        for _ in range(8):
            pending = ~accepted
            if not pending.any():
                break
            cand = Ga[pending] + t[pending][:, None, None] * step[pending]
            with np.errstate(all="ignore"):
                try:
                    rc = _residual(model, lam[idx][pending], cand)
                except np.linalg.LinAlgError:
                    rc = np.full(pending.sum(), np.inf)
            good = np.isfinite(rc) & (rc < res[idx][pending]) & _herglotz_ok(cand)
            pos = np.nonzero(pending)[0]
            newG[pos[good]] = cand[good]
            newr[pos[good]] = rc[good]
            accepted[pos[good]] = True
            t[pending] *= 0.5
        G[idx] = newG
        res[idx] = newr
        its[idx] += 1
        # elements whose step was rejected outright leave Newton
        active[idx[~accepted]] = False
        active &= res > target
    return G, res, its


def _solve_upper(model, lam, G0=None, rtol=tol.DYSON_RESIDUAL, max_iter=tol.DYSON_MAX_ITER):
    """Solve for ``Im lam > 0``; returns ``(G, residual, iterations)``."""
    B, m, _ = lam.shape
    target = rtol * _scale(lam)
    ek = _eta_kron(model)
    eye = np.eye(m)
    its = np.zeros(B, dtype=int)
    if G0 is None:
        # continuation from far above the axis, where damping contracts fast
        mu = np.linalg.eigvalsh(imag_part(lam))[:, 0]
        shift = 4.0 * max(1.0, model.spectral_radius_bound)
        lam_s = lam + 1j * shift * eye
        G = np.linalg.inv(lam_s - model.a0)
        G, _, k = _damped(model, lam_s, G, 1e-10 * _scale(lam_s), max_iter)
        its += k
        floor = 0.5 * float(np.min(mu))
        while shift > 0:
            shift = shift / 2 if shift / 2 > floor else 0.0
            lam_s = lam + 1j * shift * eye
            stage_target = target if shift == 0 else 1e-9 * _scale(lam_s)
            G, res, k = _newton(model, lam_s, G, stage_target, ek=ek)
            its += k
            bad = res > stage_target
            if bad.any():
                Gb, rb, kb = _damped(model, lam_s[bad], G[bad], stage_target[bad], max_iter)
                Gb, rb, kb2 = _newton(model, lam_s[bad], Gb, stage_target[bad], ek=ek)
                G[bad], its[bad] = Gb, its[bad] + kb + kb2
    else:
        G = np.array(G0, dtype=complex).reshape(B, m, m).copy()
        # a warm start on the wrong side of the Herglotz cone is replaced
        bad = ~_herglotz_ok(G)
        if bad.any():
            G[bad] = np.linalg.inv(lam[bad] - model.a0)
    res = _residual(model, lam, G)
    needs = res > target
    if needs.any():
        G[needs], r, k = _newton(model, lam[needs], G[needs], target[needs], ek=ek)
        its[needs] += k
        res[needs] = r
    needs = res > target
    if needs.any():
        sub = lam[needs]
        Gs, r, k = _damped(model, sub, G[needs], tol.NEWTON_SWITCH * _scale(sub), max_iter)
        Gs, r, k2 = _newton(model, sub, Gs, target[needs], ek=ek)
        G[needs], res[needs], its[needs] = Gs, r, its[needs] + k + k2
    needs = res > target
    if needs.any():
        # last resort: fixed-point iteration all the way down
        sub = lam[needs]
        Gs, r, k = _damped(model, sub, np.linalg.inv(sub - model.a0), target[needs], max_iter)
        G[needs], res[needs], its[needs] = Gs, r, its[needs] + k
    worst = int(np.argmax(res / target))
    if res[worst] > target[worst]:
        raise ConvergenceError(
            f"fixed point not reached at batch index {worst}: residual {res[worst]:.3e} > {target[worst]:.3e}",
            residual=float(res[worst]), index=worst,
        )
    return G, res, its


def solve_G_batch(model: CircularModel, lam, G0=None, rtol: float = tol.DYSON_RESIDUAL,
                  max_iter: int = tol.DYSON_MAX_ITER):
    """Solve the fixed-point equation for a stack of spectral parameters.

    Parameters
    ----------
    model : CircularModel
    lam : array_like
        Scalar, ``(m, m)``, ``(B,)`` (scalar multiples of the identity) or
        ``(B, m, m)``.  Every element must have definite imaginary part;
        signs may differ across the batch.
    G0 : array_like, optional
        Warm start of shape ``(B, m, m)``.

    Returns
    -------
    G, residual, iterations : ndarray
        Shapes ``(B, m, m)``, ``(B,)``, ``(B,)``.

    Notes
    -----
    For ``Im lam < 0`` the model ``(-a0, -a_j)`` is solved at ``-lam`` and
    the result negated: ``G(lam) = -G^{(-)}(-lam)``.
    """
    lam = _as_lambda(lam, model.m)
    B, m, _ = lam.shape
    signs = _imag_signs(lam)
    G = np.empty((B, m, m), dtype=complex)
    res = np.empty(B)
    its = np.empty(B, dtype=int)
    for sign, mdl in ((1, model), (-1, None)):
        sel = signs == sign
        if not sel.any():
            continue
        if sign == 1:
            g0 = None if G0 is None else np.asarray(G0)[sel]
            G[sel], res[sel], its[sel] = _solve_upper(model, lam[sel], g0, rtol, max_iter)
        else:
            neg = model.negated()
            g0 = None if G0 is None else -np.asarray(G0)[sel]
            Gm, res[sel], its[sel] = _solve_upper(neg, -lam[sel], g0, rtol, max_iter)
            G[sel] = -Gm
    return G, res, its


def solve_G(model: CircularModel, lam, G0=None) -> ResolventPoint:
    """Solve ``lam = a0 + eta(G) + G^{-1}`` at a single spectral parameter.

    Examples
    --------
    >>> from gaussnc.ncpoly import scalar_model
    >>> pt = solve_G(scalar_model(), 2.5 + 1e-14j)
    >>> round(pt.G[0, 0].real, 12)
    0.5
    """
    lam_b = _as_lambda(lam, model.m)
    if len(lam_b) != 1:
        raise LinAlgError("solve_G takes a single spectral parameter; use solve_G_batch")
    g0 = None if G0 is None else np.asarray(G0, dtype=complex).reshape(1, model.m, model.m)
    G, res, its = solve_G_batch(model, lam_b, g0)
    return ResolventPoint(lam_b[0], G[0], int(its[0]), float(res[0]))


# --------------------------------------------------------------------------
# directional derivative
# --------------------------------------------------------------------------

class DirectionalSolver:
    """Factored linearisation ``dG - G eta(dG) G = -G x G`` at fixed ``G``.

    Building the object assembles the ``m^2 x m^2`` operator for each batch
    element once; :meth:`solve` then handles any number of directions.
    """

    def __init__(self, model: CircularModel, G: np.ndarray):
        G = np.asarray(G, dtype=complex)
        self.batched = G.ndim == 3
        self.G = G if self.batched else G[None]
        self.model = model
        B, m, _ = self.G.shape
        T = np.broadcast_to(np.eye(m * m, dtype=complex), (B, m * m, m * m)).copy()
        for aj in model.a:
            ajs = adjoint(aj)
            T -= _bkron(self.G @ aj, np.swapaxes(ajs @ self.G, 1, 2))
            T -= _bkron(self.G @ ajs, np.swapaxes(aj @ self.G, 1, 2))
        self.T = T
        self.cond = np.linalg.cond(T)

    def solve(self, direction) -> np.ndarray:
        """``G'(lam)[direction]``.

        ``direction`` has shape ``(m, m)``, ``(K, m, m)`` (shared across the
        batch) or ``(B, K, m, m)``.  The output mirrors the input with the
        batch axis in front when the solver is batched.
        """
        B, m, _ = self.G.shape
        X = np.asarray(direction, dtype=complex)
        single = X.ndim == 2
        if X.ndim == 2:
            X = X[None]
        if X.ndim == 3:
            X = np.broadcast_to(X, (B,) + X.shape)
        K = X.shape[1]
        rhs = -(self.G[:, None] @ X @ self.G[:, None])
        rhs_v = np.moveaxis(rhs.reshape(B, K, m * m), 1, 2)
        out = np.empty((B, m * m, K), dtype=complex)
        good = self.cond < tol.DIRECTIONAL_COND
        if good.any():
            out[good] = np.linalg.solve(self.T[good], rhs_v[good])
        if (~good).any():
            out[~good] = self._series(np.nonzero(~good)[0], rhs_v[~good])
        res = np.moveaxis(out, 1, 2).reshape(B, K, m, m)
        if single:
            res = res[:, 0]
        return res if self.batched else res[0]

    def solve_each(self, directions) -> np.ndarray:
        """One direction per batch element; ``directions`` has shape ``(B, m, m)``."""
        X = np.asarray(directions, dtype=complex)
        if not self.batched:
            return self.solve(X)
        return self.solve(X[:, None])[:, 0]

    def _series(self, idx, rhs_v):
        """Geometric series ``sum_k (I - T)^k rhs`` for ill-conditioned points."""
        N = self.T
        acc = rhs_v.copy()
        term = rhs_v.copy()
        eye = np.eye(N.shape[1])
        M = eye[None] - N[idx]
        for _ in range(5000):
            term = M @ term
            acc += term
            if np.max(np.abs(term)) < 1e-14 * max(1.0, np.max(np.abs(acc))):
                return acc
            if not np.all(np.isfinite(term)) or np.max(np.abs(term)) > 1e12:
                break
        raise ConditioningError(
            f"directional derivative: linear system condition {np.max(self.cond[idx]):.2e} and "
            "the geometric series does not converge (spectral parameter too close to the spectrum)"
        )


def solve_G_directional(model: CircularModel, lam, direction, point: ResolventPoint | None = None) -> np.ndarray:
    """Directional derivative ``G'(lam)[direction]`` at a single point."""
    point = solve_G(model, lam) if point is None else point
    return DirectionalSolver(model, point.G).solve(np.asarray(direction, dtype=complex))


# --------------------------------------------------------------------------
# R, L, l
# --------------------------------------------------------------------------

def _tilde_lambda(lam: np.ndarray) -> np.ndarray:
    B, m, _ = lam.shape
    out = np.zeros((B, 2 * m, 2 * m), dtype=complex)
    out[:, :m, :m] = np.swapaxes(lam, 1, 2)
    out[:, m:, m:] = lam
    return out


def _r_directions(model: CircularModel):
    """Coefficients ``b`` and the ``2m x 2m`` directions ``[[0, e_kl b], [0, 0]]``."""
    m = model.m
    bs, dirs, index = [], [], []
    for aj in model.a:
        for b in (aj, adjoint(aj)):
            bs.append(b)
            for k in range(m):
                for l in range(m):
                    d = np.zeros((2 * m, 2 * m), dtype=complex)
                    d[:m, m:] = matrix_unit(m, k, l) @ b
                    dirs.append(d)
                    index.append((len(bs) - 1, k, l))
    return bs, np.array(dirs).reshape(-1, 2 * m, 2 * m), index


@dataclass
class CorrectionChain:
    """``G``, ``R``, ``L`` on a batch of spectral parameters, plus warm starts."""

    lam: np.ndarray
    G: np.ndarray
    R: np.ndarray
    L: np.ndarray
    G_tilde: np.ndarray = field(repr=False, default=None)

    @property
    def l(self) -> np.ndarray:
        """Normalised trace ``tr_m L``."""
        return np.trace(self.L, axis1=1, axis2=2) / self.L.shape[1]


def correction_chain(model: CircularModel, lam, G0=None, Gt0=None) -> CorrectionChain:
    """``G``, ``R`` and ``L`` on a stack of spectral parameters.

    ``R`` is assembled from the doubled model ``diag(conj a_j, a_j)`` at
    ``diag(lam^T, lam)``:

    ``R = - sum_{j, b in {a_j, a_j^*}} sum_{k,l} b e_kl [G~'[[0, e_kl b], [0, 0]]]_{12}``

    and ``L = -G'(lam)[R G^{-1}]``.
    """
    lam = _as_lambda(lam, model.m)
    B, m, _ = lam.shape
    G, _, _ = solve_G_batch(model, lam, G0)
    R = np.zeros((B, m, m), dtype=complex)
    Gt = None
    if model.r:
        tmodel = model.tilde()
        Gt, _, _ = solve_G_batch(tmodel, _tilde_lambda(lam), Gt0)
        bs, dirs, index = _r_directions(model)
        M = DirectionalSolver(tmodel, Gt).solve(dirs)  # (B, K, 2m, 2m)
        M12 = M[:, :, :m, m:]
        for kk, (bi, k, l) in enumerate(index):
            b = bs[bi]
            # b e_kl M12 = outer(b[:, k], M12[l, :])
            R -= b[None, :, k, None] * M12[:, kk, l, None, :]
    D = DirectionalSolver(model, G)
    L = -D.solve_each(R @ np.linalg.inv(G))
    return CorrectionChain(lam, G, R, L, Gt)


def R_of(model: CircularModel, lam) -> np.ndarray:
    """The correction coefficient ``R(lam)`` as an ``m x m`` matrix."""
    return correction_chain(model, _as_lambda(lam, model.m)[:1]).R[0]


def L_of(model: CircularModel, lam) -> np.ndarray:
    """``L(lam) = (id (x) tau)[(lam - s)^{-1} (R G^{-1} (x) 1) (lam - s)^{-1}]``."""
    return correction_chain(model, _as_lambda(lam, model.m)[:1]).L[0]


def l_of(model: CircularModel, lam) -> complex:
    """``tr_m L(lam 1_m)`` for a scalar ``lam``."""
    return complex(correction_chain(model, np.asarray([lam], dtype=complex)).l[0])


# --------------------------------------------------------------------------
# density and support
# --------------------------------------------------------------------------

def richardson_weights(etas) -> np.ndarray:
    """Weights ``w`` with ``sum_k w_k f(eta_k) = p(0)`` for the interpolating polynomial ``p``."""
    etas = np.asarray(etas, dtype=float)
    w = np.ones(len(etas))
    for k in range(len(etas)):
        for j in range(len(etas)):
            if j != k:
                w[k] *= etas[j] / (etas[j] - etas[k])
    return w


@dataclass(frozen=True)
class DensityProfile:
    """Spectral density of ``s`` sampled on a grid.

    Attributes
    ----------
    grid : ndarray
    density : ndarray
        Richardson-extrapolated density, clipped at zero.
    eta_schedule : tuple
    support_intervals : tuple of (lo, hi)
    extrapolated : ndarray
        The unclipped linear extrapolation; integrals use this array because
        it is linear in the per-``eta`` densities.
    eta_densities : ndarray
        Shape ``(len(eta_schedule), len(grid))``.
    """

    grid: np.ndarray
    density: np.ndarray
    eta_schedule: tuple
    support_intervals: tuple
    extrapolated: np.ndarray
    eta_densities: np.ndarray

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def moment(self, d: int) -> float:
        """``int x^d rho(x) dx`` from the extrapolated density."""
        return float(np.trapezoid(self.grid ** d * self.extrapolated, self.grid))

    def support_flag(self) -> np.ndarray:
        flag = np.zeros(len(self.grid), dtype=bool)
        for lo, hi in self.support_intervals:
            flag |= (self.grid >= lo) & (self.grid <= hi)
        return flag

    def contains(self, values, eps: float) -> np.ndarray:
        """Whether each value lies in the support fattened by ``eps``."""
        values = np.asarray(values, dtype=float)
        inside = np.zeros(values.shape, dtype=bool)
        for lo, hi in self.support_intervals:
            inside |= (values > lo - eps) & (values < hi + eps)
        return inside


def default_grid(model: CircularModel, step: float = 0.01, margin: float = 1.0) -> np.ndarray:
    """Uniform grid over ``[-(bound + margin), bound + margin]``."""
    bound = model.spectral_radius_bound + margin
    n = int(math.ceil(2 * bound / step)) + 1
    return np.linspace(-bound, bound, n)


def _densities_on(model, xs, etas, warm=None):
    """Per-``eta`` densities at abscissae ``xs``; ``warm`` chains warm starts."""
    m = model.m
    out = np.empty((len(etas), len(xs)))
    G = warm
    for k, eta in enumerate(etas):
        G, _, _ = solve_G_batch(model, xs + 1j * eta, G)
        out[k] = -np.trace(G, axis1=1, axis2=2).imag / (m * math.pi)
    return out


def density_and_support(model: CircularModel, grid=None, eta_schedule=tol.ETA_SCHEDULE,
                        threshold: float = tol.SUPPORT_THRESHOLD, refine: bool = True) -> DensityProfile:
    """Spectral density ``-(1/pi) Im tr_m G(x + i eta)`` extrapolated to ``eta = 0``.

    Parameters
    ----------
    model : CircularModel
    grid : array_like, optional
        Must cover ``[-(||a0|| + 4 sum ||a_j||) - 1, ... + 1]``; defaults to
        :func:`default_grid` with spacing ``min(0.01, min(eta)/2.5)``.  The
        integrand has poles at distance ``eta`` from the axis, so the
        trapezoid rule loses accuracy once the spacing approaches ``eta``.
    eta_schedule : sequence of float
        Decreasing smoothing widths; the per-``eta`` densities are combined
        by polynomial (Richardson) extrapolation to zero.
    threshold : float
        Density below this value counts as a gap.
    refine : bool
        Bisect each support endpoint on the threshold crossing.
    """
    etas = tuple(sorted((float(e) for e in eta_schedule), reverse=True))
    if grid is None:
        grid = default_grid(model, min(0.01, etas[-1] / 2.5))
    grid = np.asarray(grid, dtype=float)
    bound = model.spectral_radius_bound + 1.0
    if grid[0] > -bound + 1e-12 or grid[-1] < bound - 1e-12:
        raise ValueError(f"grid [{grid[0]}, {grid[-1]}] must cover [-{bound}, {bound}]")
    w = richardson_weights(etas)
    per_eta = _densities_on(model, grid, etas)
    raw = w @ per_eta
    dens = np.clip(raw, 0.0, None)
    intervals = _support_intervals(model, grid, dens, etas, w, threshold, refine)
    return DensityProfile(grid, dens, etas, intervals, raw, per_eta)


def _support_intervals(model, grid, dens, etas, w, threshold, refine):
    above = dens > threshold
    intervals = []
    i = 0
    n = len(grid)
    while i < n:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and above[j + 1]:
            j += 1
        lo = grid[i] if i == 0 else grid[i - 1]
        hi = grid[j] if j == n - 1 else grid[j + 1]
        if refine:
            lo, hi = _refine_interval(model, grid, i, j, threshold, lo, hi)
        if lo is not None:
            intervals.append((float(lo), float(hi)))
        i = j + 1
    return tuple(intervals)


def boundary_density(model: CircularModel, xs) -> np.ndarray:
    """``-(1/pi) Im tr_m G(x + i EDGE_ETA)``: the density read off just above the axis."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    G, _, _ = solve_G_batch(model, xs + 1j * tol.EDGE_ETA)
    return -np.trace(G, axis1=1, axis2=2).imag / (model.m * math.pi)


def _refine_interval(model, grid, i, j, threshold, lo, hi):
    """Move a grid-detected interval onto the boundary-value threshold crossings.

    The smoothed densities spill past square-root edges by roughly the
    smallest ``eta``; the boundary value does not, so each bracket is first
    walked inward until it straddles the crossing and then bisected.
    """
    n = len(grid)
    f = lambda x: float(boundary_density(model, [x])[0])
    a = i
    while a <= j and f(grid[a]) <= threshold:
        a += 1
    if a > j:
        return None, None
    b = j
    while f(grid[b]) <= threshold:
        b -= 1
    if a > 0:
        lo = _bisect_edge(f, grid[a - 1], grid[a], threshold)
    if b < n - 1:
        hi = _bisect_edge(f, grid[b + 1], grid[b], threshold)
    return lo, hi


def _bisect_edge(f, outside, inside, threshold, steps=40):
    """Threshold crossing of ``f`` between a gap point and a support point."""
    if f(outside) > threshold:
        return outside
    for _ in range(steps):
        mid = 0.5 * (outside + inside)
        if f(mid) > threshold:
            inside = mid
        else:
            outside = mid
        if abs(inside - outside) < 1e-10:
            break
    return 0.5 * (outside + inside)


# --------------------------------------------------------------------------
# scalar closed forms (semicircular model) used as oracles
# --------------------------------------------------------------------------

def sqrt_branch(z):
    """``sqrt(z^2 - 4)`` on the branch that behaves like ``z`` at infinity."""
    z = np.asarray(z, dtype=complex)
    return np.sqrt(z - 2) * np.sqrt(z + 2)


def semicircle_g(z):
    """Stieltjes transform ``(z - sqrt(z^2 - 4))/2`` of the standard semicircle."""
    z = np.asarray(z, dtype=complex)
    return (z - sqrt_branch(z)) / 2


def semicircle_g_prime(z):
    z = np.asarray(z, dtype=complex)
    return 0.5 * (1 - z / sqrt_branch(z))
