"""Samplers for the eight Gaussian random matrix ensembles.

Labels and entry laws (``s2`` is the variance parameter):

``sgrm``
    Self-adjoint complex; diagonal ``N(0, s2)``, off-diagonal real and
    imaginary parts ``N(0, s2/2)``.
``grm``
    Complex, all real and imaginary parts ``N(0, s2/2)``.
``grm_r``
    Real, all entries ``N(0, s2)``.
``goe``
    Real symmetric; diagonal ``N(0, 2 s2)``, off-diagonal ``N(0, s2)``.
``goe_star``
    Purely imaginary self-adjoint, zero diagonal, ``|X_jk|`` drawn as
    ``N(0, s2)``.
``gse``
    ``1 (x) V + J (x) iW + K (x) iY + L (x) iZ`` with ``V`` from
    ``goe(n, s2/4)`` and ``W, Y, Z`` from ``goe_star(n, s2/4)``.
``gse_star``
    The same with the roles of ``goe`` and ``goe_star`` swapped.
``grm_h``
    ``1 (x) V + J (x) W + K (x) X + L (x) Z`` with all four from
    ``grm_r(n, s2/4)``.

The quaternionic kinds live in ``M_2(C) (x) M_n(C)`` and are returned as
``2n x 2n`` complex matrices with the ``2 x 2`` factor outermost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .linalg import adjoint, self_adjoint_defect
from .rng import RngStream

KINDS = ("sgrm", "grm", "grm_r", "goe", "goe_star", "gse", "gse_star", "grm_h")
QUATERNIONIC = ("gse", "gse_star", "grm_h")

# 2x2 images of the quaternion units 1, j, k, l
Q_ONE = np.eye(2, dtype=complex)
Q_J = np.array([[1j, 0], [0, -1j]])
Q_K = np.array([[0, 1], [-1, 0]], dtype=complex)
Q_L = np.array([[0, 1j], [1j, 0]])
QUATERNION_UNITS = (Q_ONE, Q_J, Q_K, Q_L)


class StructuralTypeError(ValueError):
    """Input matrix does not have the structure required by the operation."""


@dataclass(frozen=True)
class EnsembleSpec:
    """Which ensemble to draw from.

    ``goe_diagonal`` selects the GOE diagonal variance: ``"double"`` gives
    ``2 s2`` (the convention used throughout), ``"unit"`` gives ``s2``.
    """

    kind: str
    n: int
    sigma2: float
    goe_diagonal: str = "double"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}; expected one of {KINDS}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.goe_diagonal not in ("double", "unit"):
            raise ValueError(f"goe_diagonal must be 'double' or 'unit', got {self.goe_diagonal!r}")

    @property
    def dim(self) -> int:
        return 2 * self.n if self.kind in QUATERNIONIC else self.n

    @classmethod
    def normalized(cls, kind: str, n: int, **kw) -> "EnsembleSpec":
        """Spec with ``sigma2 = 1/n``, the normalisation with limit spectrum [-2, 2]."""
        return cls(kind, n, 1.0 / n, **kw)


# --------------------------------------------------------------------------
# index layouts: fixed row-major consumption order
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _upper(n: int, strict: bool):
    k = 1 if strict else 0
    rows, cols = np.triu_indices(n, k)
    return rows, cols


@lru_cache(maxsize=None)
def _sgrm_layout(n: int):
    """Offsets into the normal block for the row-major upper triangle.

    Diagonal entries consume one normal, off-diagonal entries two (real then
    imaginary).
    """
    rows, cols = _upper(n, False)
    width = np.where(rows == cols, 1, 2)
    offsets = np.concatenate([[0], np.cumsum(width)[:-1]])
    return rows, cols, offsets, int(width.sum())


def _count(kind: str, n: int) -> int:
    if kind == "sgrm":
        return _sgrm_layout(n)[3]
    if kind == "grm":
        return 2 * n * n
    if kind == "grm_r":
        return n * n
    if kind == "goe":
        return n * (n + 1) // 2
    if kind == "goe_star":
        return n * (n - 1) // 2
    if kind == "gse":
        return _count("goe", n) + 3 * _count("goe_star", n)
    if kind == "gse_star":
        return _count("goe_star", n) + 3 * _count("goe", n)
    if kind == "grm_h":
        return 4 * n * n
    raise ValueError(kind)


def _assemble(kind: str, n: int, sigma2: float, z: np.ndarray, goe_diagonal: str) -> np.ndarray:
    """Build a batch of samples from standard normals ``z`` of shape (B, count)."""
    batch = z.shape[0]
    if kind == "grm_r":
        return (math.sqrt(sigma2) * z.reshape(batch, n, n)).astype(complex)
    if kind == "grm":
        pairs = z.reshape(batch, n, n, 2)
        return math.sqrt(sigma2 / 2) * (pairs[..., 0] + 1j * pairs[..., 1])
    if kind == "sgrm":
        rows, cols, offsets, _ = _sgrm_layout(n)
        out = np.zeros((batch, n, n), dtype=complex)
        diag = rows == cols
        out[:, rows[diag], cols[diag]] = math.sqrt(sigma2) * z[:, offsets[diag]]
        r, c, o = rows[~diag], cols[~diag], offsets[~diag]
        vals = math.sqrt(sigma2 / 2) * (z[:, o] + 1j * z[:, o + 1])
        out[:, r, c] = vals
        out[:, c, r] = np.conj(vals)
        return out
    if kind == "goe":
        rows, cols = _upper(n, False)
        diag_var = 2 * sigma2 if goe_diagonal == "double" else sigma2
        scale = np.where(rows == cols, math.sqrt(diag_var), math.sqrt(sigma2))
        vals = z * scale
        out = np.zeros((batch, n, n), dtype=complex)
        out[:, rows, cols] = vals
        out[:, cols, rows] = vals
        return out
    if kind == "goe_star":
        rows, cols = _upper(n, True)
        vals = 1j * math.sqrt(sigma2) * z
        out = np.zeros((batch, n, n), dtype=complex)
        out[:, rows, cols] = vals
        out[:, cols, rows] = -vals
        return out
    if kind in ("gse", "gse_star"):
        ng, ns = _count("goe", n), _count("goe_star", n)
        quarter = sigma2 / 4
        if kind == "gse":
            v = _assemble("goe", n, quarter, z[:, :ng], goe_diagonal)
            rest = [
                _assemble("goe_star", n, quarter, z[:, ng + t * ns: ng + (t + 1) * ns], goe_diagonal)
                for t in range(3)
            ]
        else:
            v = _assemble("goe_star", n, quarter, z[:, :ns], goe_diagonal)
            rest = [
                _assemble("goe", n, quarter, z[:, ns + t * ng: ns + (t + 1) * ng], goe_diagonal)
                for t in range(3)
            ]
        parts = [v] + [1j * w for w in rest]
        return quaternion_embed(parts)
    if kind == "grm_h":
        nn = n * n
        parts = [_assemble("grm_r", n, sigma2 / 4, z[:, t * nn:(t + 1) * nn], goe_diagonal) for t in range(4)]
        return quaternion_embed(parts)
    raise ValueError(kind)


def quaternion_embed(parts) -> np.ndarray:
    """``sum_q e_q (x) parts[q]`` over the units ``1, J, K, L``.

    ``parts`` may carry a leading batch axis.
    """
    parts = [np.asarray(p) for p in parts]
    n = parts[0].shape[-1]
    lead = parts[0].shape[:-2]
    out = np.zeros(lead + (2 * n, 2 * n), dtype=complex)
    for unit, p in zip(QUATERNION_UNITS, parts):
        for a in range(2):
            for b in range(2):
                if unit[a, b] != 0:
                    out[..., a * n:(a + 1) * n, b * n:(b + 1) * n] += unit[a, b] * p
    return out


def quaternion_components(x: np.ndarray) -> list:
    """Inverse of :func:`quaternion_embed`: ``M_q = (tr_2 (x) id)((e_q^* (x) 1) x)``."""
    x = np.asarray(x)
    n = x.shape[-1] // 2
    blocks = [[x[..., a * n:(a + 1) * n, b * n:(b + 1) * n] for b in range(2)] for a in range(2)]
    comps = []
    for unit in QUATERNION_UNITS:
        ustar = np.conj(unit.T)
        acc = 0
        for a in range(2):
            for b in range(2):
                if ustar[a, b] != 0:
                    acc = acc + ustar[a, b] * blocks[b][a]
        comps.append(acc / 2)
    return comps


def in_quaternion_image(x: np.ndarray, atol: float = 1e-13) -> bool:
    """Block test for the image of ``M_n(H)``: ``D = conj(A)`` and ``C = -conj(B)``."""
    x = np.asarray(x)
    n = x.shape[-1] // 2
    a, b = x[:n, :n], x[:n, n:]
    c, d = x[n:, :n], x[n:, n:]
    return bool(np.max(np.abs(d - np.conj(a)), initial=0) <= atol
                and np.max(np.abs(c + np.conj(b)), initial=0) <= atol)


def sample_batch(spec: EnsembleSpec, stream: RngStream, reps: int) -> np.ndarray:
    """Draw ``reps`` consecutive samples; identical to ``reps`` calls of :func:`sample`."""
    z = stream.normals(reps * _count(spec.kind, spec.n)).reshape(reps, -1)
    return _assemble(spec.kind, spec.n, spec.sigma2, z, spec.goe_diagonal)


def sample(spec: EnsembleSpec, stream: RngStream) -> np.ndarray:
    """Draw one matrix from ``spec`` using ``stream``.

    Examples
    --------
    >>> from gaussnc.rng import RngStream
    >>> x = sample(EnsembleSpec("goe", 5, 0.2), RngStream(7))
    >>> bool(np.all(x == x.T)) and bool(np.all(x.imag == 0))
    True
    """
    return sample_batch(spec, stream, 1)[0]


# --------------------------------------------------------------------------
# composition identities
# --------------------------------------------------------------------------

def _is_real_symmetric(x, atol=0.0):
    return np.max(np.abs(np.imag(x)), initial=0) <= atol and np.max(np.abs(x - x.T), initial=0) <= atol


def _is_imag_selfadjoint(x, atol=0.0):
    return np.max(np.abs(np.real(x)), initial=0) <= atol and np.max(np.abs(x - adjoint(x)), initial=0) <= atol


def compose_grmr(x1, x2) -> np.ndarray:
    """``(x1 + i x2)/sqrt(2)`` for ``x1`` real symmetric and ``x2`` imaginary self-adjoint."""
    x1 = np.asarray(x1, dtype=complex)
    x2 = np.asarray(x2, dtype=complex)
    if x1.shape != x2.shape or x1.ndim != 2 or x1.shape[0] != x1.shape[1]:
        raise StructuralTypeError(f"shape mismatch {x1.shape} vs {x2.shape}")
    if not _is_real_symmetric(x1, 1e-13):
        raise StructuralTypeError("x1 must be real symmetric (GOE type)")
    if not _is_imag_selfadjoint(x2, 1e-13):
        raise StructuralTypeError("x2 must be purely imaginary self-adjoint (GOE* type)")
    return (x1 + 1j * x2) / math.sqrt(2)


def decompose_grmr(y) -> tuple:
    """Split a real matrix into its GOE and GOE* parts."""
    y = np.asarray(y, dtype=complex)
    return (y + adjoint(y)) / math.sqrt(2), (y - adjoint(y)) / (1j * math.sqrt(2))


def compose_grmh(x1, x2) -> np.ndarray:
    """``(x1 + i x2)/sqrt(2)`` for ``x1`` of GSE type and ``x2`` of GSE* type."""
    x1 = np.asarray(x1, dtype=complex)
    x2 = np.asarray(x2, dtype=complex)
    if x1.shape != x2.shape or x1.ndim != 2 or x1.shape[0] != x1.shape[1] or x1.shape[0] % 2:
        raise StructuralTypeError(f"expected equal even square shapes, got {x1.shape} vs {x2.shape}")
    if self_adjoint_defect(x1) > 1e-13 or not in_quaternion_image(x1):
        raise StructuralTypeError("x1 must be self-adjoint in the quaternionic image (GSE type)")
    if self_adjoint_defect(x2) > 1e-13 or not in_quaternion_image(1j * x2):
        raise StructuralTypeError("i*x2 must lie in the quaternionic image (GSE* type)")
    return (x1 + 1j * x2) / math.sqrt(2)


# --------------------------------------------------------------------------
# covariance audit
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditRow:
    component: str
    entry_class: str
    count: int
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    target_variance: float

    @property
    def z_mean(self) -> float:
        if self.mean_se == 0:
            return 0.0 if self.mean == 0 else math.inf
        return self.mean / self.mean_se

    @property
    def z_variance(self) -> float:
        if self.variance_se == 0:
            return 0.0 if self.variance == self.target_variance else math.inf
        return (self.variance - self.target_variance) / self.variance_se


@dataclass(frozen=True)
class CovarianceReport:
    spec: EnsembleSpec
    reps: int
    rows: tuple

    @property
    def max_abs_z(self) -> float:
        return max(max(abs(r.z_mean), abs(r.z_variance)) for r in self.rows)

    def row(self, component: str, entry_class: str) -> AuditRow:
        for r in self.rows:
            if r.component == component and r.entry_class == entry_class:
                return r
        raise KeyError((component, entry_class))


def _targets(kind: str, sigma2: float, goe_diagonal: str) -> dict:
    """Target variances of (diag_re, diag_im, off_re, off_im) per real coordinate."""
    diag_goe = 2 * sigma2 if goe_diagonal == "double" else sigma2
    table = {
        "sgrm": (sigma2, 0.0, sigma2 / 2, sigma2 / 2),
        "grm": (sigma2 / 2, sigma2 / 2, sigma2 / 2, sigma2 / 2),
        "grm_r": (sigma2, 0.0, sigma2, 0.0),
        "goe": (diag_goe, 0.0, sigma2, 0.0),
        "goe_star": (0.0, 0.0, 0.0, sigma2),
    }
    return dict(zip(("diag_re", "diag_im", "off_re", "off_im"), table[kind]))


def _audit_block(samples, kind, sigma2, goe_diagonal, component):
    reps, n, _ = samples.shape
    targets = _targets(kind, sigma2, goe_diagonal)
    hermitian = kind in ("sgrm", "goe", "goe_star")
    diag = samples[:, np.arange(n), np.arange(n)]
    if hermitian:
        r, c = _upper(n, True)
    else:
        r, c = np.nonzero(~np.eye(n, dtype=bool))
    off = samples[:, r, c]
    rows = []
    for name, vals in (("diag_re", diag.real), ("diag_im", diag.imag),
                       ("off_re", off.real), ("off_im", off.imag)):
        flat = vals.ravel()
        count = flat.size
        if count == 0:
            continue
        mean = float(np.mean(flat))
        sq = flat ** 2
        var = float(np.mean(sq))
        mean_se = math.sqrt(var / count)
        var_se = float(np.std(sq, ddof=1) / math.sqrt(count)) if count > 1 else 0.0
        rows.append(AuditRow(component, name, count, mean, mean_se, var, var_se, targets[name]))
    return rows


def covariance_audit(spec: EnsembleSpec, reps: int, stream: RngStream, chunk: int = 2000) -> CovarianceReport:
    """Empirical entry means and variances against the ensemble's defining laws.

    Entries are pooled by class (diagonal / off-diagonal, real / imaginary
    part).  Quaternionic kinds are first split into their ``1, J, K, L``
    component matrices; components that carry a factor ``i`` by definition
    are divided by it before auditing.  Variances are estimated as mean
    squares (the means are zero by construction).
    """
    if reps < 100:
        raise ValueError("covariance_audit needs reps >= 100")
    kind, n = spec.kind, spec.n
    collected = []
    done = 0
    while done < reps:
        b = min(chunk, reps - done)
        collected.append(sample_batch(spec, stream, b))
        done += b
    x = np.concatenate(collected)
    if kind not in QUATERNIONIC:
        return CovarianceReport(spec, reps, tuple(_audit_block(x, kind, spec.sigma2, spec.goe_diagonal, kind)))
    comps = quaternion_components(x)
    quarter = spec.sigma2 / 4
    if kind == "gse":
        plan = [("goe", 1), ("goe_star", 1j), ("goe_star", 1j), ("goe_star", 1j)]
    elif kind == "gse_star":
        plan = [("goe_star", 1), ("goe", 1j), ("goe", 1j), ("goe", 1j)]
    else:
        plan = [("grm_r", 1)] * 4
    rows = []
    for name, comp, (sub, factor) in zip("1JKL", comps, plan):
        rows.extend(_audit_block(comp / factor, sub, quarter, spec.goe_diagonal, f"{name}:{sub}"))
    return CovarianceReport(spec, reps, tuple(rows))
