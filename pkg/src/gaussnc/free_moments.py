"""Exact moments of semicircular and circular systems.

Mixed moments of a free Gaussian family are sums over non-crossing pair
partitions of the word positions (the free Wick rule).  A pair of positions
carrying letters ``u`` and ``v`` contributes the covariance ``tau(u v)``:

* semicircular family: ``tau(x_j x_j) = 1``;
* circular family: ``tau(y_j y_j^*) = tau(y_j^* y_j) = 1``, ``tau(y_j y_j) = 0``;

and different families never pair.  The count is computed by an interval
dynamic program in ``O(L^3)``.

Three independent evaluation routes are offered:

* :func:`word_moment` / :func:`poly_moment` expand into words;
* :func:`product_moment` runs the same interval recursion directly on a
  product of degree-one factors with matrix coefficients, avoiding the
  exponential word expansion;
* :class:`FockSpace` realises the letters as creation/annihilation
  operators on a truncated full Fock space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import comb

from . import tolerances as tol
from .ncpoly import Letter, NcPoly, word


class WordLengthCapError(ValueError):
    """Word longer than the configured cap."""


class BudgetExceededError(RuntimeError):
    """Polynomial expansion grew past the monomial budget.

    Attributes
    ----------
    partial : object
        Whatever was computed before the budget ran out.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


SEMICIRCULAR = "semicircular"
CIRCULAR = "circular"


@dataclass(frozen=True)
class FreeSystemSpec:
    """Kind of each letter family.

    Families not listed default to ``default`` (semicircular unless set).
    All families are normalised to unit covariance and are mutually free.
    """

    kinds: dict = field(default_factory=dict)
    default: str = SEMICIRCULAR

    def __post_init__(self):
        for j, k in self.kinds.items():
            if k not in (SEMICIRCULAR, CIRCULAR):
                raise ValueError(f"family {j}: unknown kind {k!r}")
        if self.default not in (SEMICIRCULAR, CIRCULAR):
            raise ValueError(f"unknown default kind {self.default!r}")

    def kind(self, family: int) -> str:
        return self.kinds.get(family, self.default)

    @classmethod
    def semicircular(cls) -> "FreeSystemSpec":
        return cls({}, SEMICIRCULAR)

    @classmethod
    def circular(cls) -> "FreeSystemSpec":
        return cls({}, CIRCULAR)

    def covariance(self, u: Letter, v: Letter) -> float:
        """``tau(u v)`` for two letters."""
        if u.family != v.family:
            return 0.0
        if self.kind(u.family) == SEMICIRCULAR:
            return 1.0
        return 1.0 if u.starred != v.starred else 0.0

    def _key(self):
        return (tuple(sorted(self.kinds.items())), self.default)


@dataclass(frozen=True)
class MomentValue:
    value: complex
    word_length: int


# --------------------------------------------------------------------------
# word route
# --------------------------------------------------------------------------

def _count_noncrossing(cov: np.ndarray) -> int:
    """Weighted count of non-crossing perfect matchings.

    ``cov[i][k]`` (nested lists of Python ints, so counts never overflow)
    is the weight of pairing positions ``i < k``.  Uses
    ``N(i, j) = sum_k cov[i, k] N(i+1, k-1) N(k+1, j)`` on intervals.
    """
    L = len(cov)
    # N[i][j] for the half-open interval [i, j); empty intervals count 1
    N = [[0] * (L + 1) for _ in range(L + 1)]
    for i in range(L + 1):
        N[i][i] = 1
    for length in range(2, L + 1, 2):
        for i in range(0, L - length + 1):
            j = i + length
            total = 0
            for k in range(i + 1, j, 2):
                w = cov[i][k]
                if w:
                    inner = N[i + 1][k]
                    if inner:
                        outer = N[k + 1][j]
                        if outer:
                            total += w * inner * outer
            N[i][j] = total
    return N[0][L]


def word_moment(w, spec: FreeSystemSpec, cap: int = tol.WORD_LENGTH_CAP) -> MomentValue:
    """``tau(w)`` by the non-crossing Wick rule.

    Parameters
    ----------
    w : sequence of Letter
    spec : FreeSystemSpec
    cap : int
        Longest admissible word.

    Examples
    --------
    >>> from gaussnc.ncpoly import Letter
    >>> x1 = Letter(1)
    >>> word_moment((x1,) * 4, FreeSystemSpec.semicircular()).value
    2
    """
    w = tuple(w)
    L = len(w)
    if L > cap:
        raise WordLengthCapError(f"word length {L} exceeds cap {cap}")
    if L % 2:
        return MomentValue(0, L)
    return MomentValue(_word_moment_cached(word(*w), spec._key()), L)


@lru_cache(maxsize=200_000)
def _word_moment_cached(w, spec_key) -> int:
    spec = FreeSystemSpec(dict(spec_key[0]), spec_key[1])
    L = len(w)
    # quick rejection: every family must balance
    counts: dict = {}
    for l in w:
        key = (l.family, l.starred if spec.kind(l.family) == CIRCULAR else False)
        counts[key] = counts.get(key, 0) + 1
    for (fam, starred), c in counts.items():
        if spec.kind(fam) == CIRCULAR:
            if counts.get((fam, not starred), 0) != c:
                return 0
        elif c % 2:
            return 0
    cov = [[0] * L for _ in range(L)]
    for i in range(L):
        for k in range(i + 1, L, 2):
            cov[i][k] = int(spec.covariance(w[i], w[k]))
    return _count_noncrossing(cov)


def brute_force_word_moment(w, spec: FreeSystemSpec) -> int:
    """Enumerate all pair partitions, keep the non-crossing admissible ones.

    Exponential; intended as a test oracle for short words.
    """
    w = tuple(w)
    L = len(w)
    if L % 2:
        return 0

    def pairings(pos):
        if not pos:
            yield []
            return
        first, rest = pos[0], pos[1:]
        for idx, partner in enumerate(rest):
            for tail in pairings(rest[:idx] + rest[idx + 1:]):
                yield [(first, partner)] + tail

    def crosses(p, q):
        (a, b), (c, d) = sorted(p), sorted(q)
        return a < c < b < d or c < a < d < b

    total = 0
    for pr in pairings(list(range(L))):
        if any(crosses(p, q) for i, p in enumerate(pr) for q in pr[i + 1:]):
            continue
        weight = 1
        for a, b in pr:
            weight *= spec.covariance(w[a], w[b])
        total += weight
    return int(total)


def poly_moment(p: NcPoly, spec: FreeSystemSpec, cap: int = tol.WORD_LENGTH_CAP):
    """``(tr_m (x) tau)(p)`` by word expansion.

    Returns a complex number; for ``m > 1`` each word contributes the
    normalised trace of its coefficient.
    """
    total = 0j
    for w, c in p.terms.items():
        if len(w) % 2:
            continue
        mom = word_moment(w, spec, cap).value
        if mom:
            trc = np.trace(c) / p.m if p.m > 1 else c
            total += trc * mom
    return total


def semicircle_moment(k: int) -> int:
    """``(1/2pi) int_{-2}^{2} x^k sqrt(4 - x^2) dx``, the Catalan number ``C_{k/2}`` for even ``k``."""
    k = int(k)
    if k < 0:
        raise ValueError("k must be non-negative")
    if k % 2:
        return 0
    if k > 60:
        raise ValueError("k must be at most 60")
    h = k // 2
    return int(comb(2 * h, h, exact=True)) // (h + 1)


# --------------------------------------------------------------------------
# product route: interval recursion with matrix coefficients
# --------------------------------------------------------------------------

def _linear_parts(p: NcPoly):
    if p.degree > 1:
        raise ValueError("product_moment needs factors of degree at most one")
    m = p.m
    eye = np.eye(m, dtype=complex)
    const = np.zeros((m, m), dtype=complex)
    letters = []
    for w, c in p.terms.items():
        c = np.asarray(c, dtype=complex) * (eye if m == 1 else 1)
        c = c.reshape(m, m)
        if not w:
            const = const + c
        else:
            letters.append((w[0], c))
    return const, letters


def product_moment(factors, spec: FreeSystemSpec, return_matrix: bool = False):
    """``(tr_m (x) tau)(p_1 p_2 ... p_L)`` for degree-one factors.

    The free Wick rule with matrix coefficients gives, on an interval of
    factors, the ``m x m`` value

    ``E[i, j) = c0_i E[i+1, j) + sum_k sum_{u, v} c_{i,u} E[i+1, k) c_{k,v} E[k+1, j) tau(u v)``

    where ``c0`` are the constant terms and ``c_{i,u}`` the coefficient of
    letter ``u`` in factor ``i``.  Cost ``O(L^3 q^2 m^3)`` for ``q`` letters
    per factor, instead of ``(q+1)^L`` words.
    """
    parts = [_linear_parts(p) for p in factors]
    m = factors[0].m if factors else 1
    L = len(parts)
    eye = np.eye(m, dtype=complex)
    E = {}
    for i in range(L + 1):
        E[(i, i)] = eye
    for length in range(1, L + 1):
        for i in range(0, L - length + 1):
            j = i + length
            const, letters_i = parts[i]
            acc = const @ E[(i + 1, j)] if np.any(const) else np.zeros((m, m), dtype=complex)
            for k in range(i + 1, j):
                inner = E[(i + 1, k)]
                outer = E[(k + 1, j)]
                if not np.any(inner) or not np.any(outer):
                    continue
                _, letters_k = parts[k]
                for u, cu in letters_i:
                    for v, cv in letters_k:
                        cov = spec.covariance(u, v)
                        if cov:
                            acc = acc + cov * (cu @ inner @ cv @ outer)
            E[(i, j)] = acc
    val = E[(0, L)]
    return val if return_matrix else np.trace(val) / m


def power_moments(p: NcPoly, d_max: int, spec: FreeSystemSpec) -> np.ndarray:
    """``(tr_m (x) tau)(p^d)`` for ``d = 0 .. d_max`` and degree-one ``p``."""
    return np.array([product_moment([p] * d, spec) if d else 1.0 for d in range(d_max + 1)], dtype=complex)


# --------------------------------------------------------------------------
# Fock space route
# --------------------------------------------------------------------------

class FockSpace:
    """Full Fock space over ``channels`` basis vectors, truncated at ``depth``.

    Semicircular family ``j`` acts as ``l_c + l_c^*`` on one channel; a
    circular family acts as ``l_a + l_b^*`` on two channels.  Any product of
    at most ``depth`` letters applied to the vacuum is computed exactly.
    """

    def __init__(self, spec: FreeSystemSpec, families, depth: int):
        self.spec = spec
        self.families = tuple(sorted(set(families)))
        self.depth = int(depth)
        chan = {}
        c = 0
        for f in self.families:
            if spec.kind(f) == SEMICIRCULAR:
                chan[f] = (c, c)
                c += 1
            else:
                chan[f] = (c, c + 1)
                c += 2
        self.channels = c
        self._chan = chan
        # basis: words over channels of length <= depth, indexed by level
        sizes = [c ** k for k in range(self.depth + 1)]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.dim = int(self.offsets[-1])
        self._create = [self._creation(ch) for ch in range(c)]
        self._ops = {}
        for f, (ca, cb) in chan.items():
            op = self._create[ca] + self._create[cb].T
            self._ops[(f, False)] = op.tocsr()
            self._ops[(f, True)] = op.conj().T.tocsr()

    def _creation(self, ch: int) -> sp.csr_matrix:
        """``l_ch``: word w at level k maps to ch.w at level k+1 (dropped past depth)."""
        rows, cols = [], []
        c = self.channels
        for k in range(self.depth):
            size = c ** k
            src = self.offsets[k] + np.arange(size)
            dst = self.offsets[k + 1] + ch * size + np.arange(size)
            rows.append(dst)
            cols.append(src)
        if rows:
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
        data = np.ones(len(rows))
        return sp.csr_matrix((data, (rows, cols)), shape=(self.dim, self.dim))

    def letter(self, l: Letter) -> sp.csr_matrix:
        return self._ops[(l.family, l.starred)]

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v

    def apply_poly(self, p: NcPoly, state: np.ndarray) -> np.ndarray:
        """Apply ``p`` to a state of shape ``(m, dim, k)``.

        The coefficient acts on the first axis, letters on the second.
        Words are applied right to left with shared suffixes cached.
        """
        m = p.m
        cache = {(): state}

        def suffix(w):
            if w not in cache:
                head, rest = w[0], w[1:]
                inner = suffix(rest)
                op = self.letter(head)
                s = inner.shape
                moved = np.moveaxis(inner, 1, 0).reshape(s[1], -1)
                cache[w] = np.moveaxis((op @ moved).reshape(s[1], s[0], s[2]), 0, 1)
            return cache[w]

        out = np.zeros_like(state)
        for w, c in p.terms.items():
            val = suffix(w)
            if m == 1:
                out += c * val
            else:
                out += np.einsum("pq,qdk->pdk", c, val)
        return out


def fock_power_moments(p: NcPoly, d_max: int, spec: FreeSystemSpec) -> np.ndarray:
    """``(tr_m (x) tau)(p^d)`` for ``d <= d_max`` via the Fock space.

    Uses ``tau(p^d) = <p^{*a} Omega, p^b Omega>`` with ``a + b = d``; the
    truncation depth ``deg(p) * ceil(d_max/2)`` makes every value exact.
    """
    m = p.m
    half = (d_max + 1) // 2
    fock = FockSpace(spec, p.families or (1,), p.degree * half)
    start = np.zeros((m, fock.dim, m), dtype=complex)
    for i in range(m):
        start[i, 0, i] = 1.0
    fwd = [start]
    back = [start]
    padj = p.adjoint()
    for _ in range(half):
        fwd.append(fock.apply_poly(p, fwd[-1]))
        back.append(fock.apply_poly(padj, back[-1]))
    out = np.zeros(d_max + 1, dtype=complex)
    for d in range(d_max + 1):
        a = d // 2
        b = d - a
        # <p^{*a} e_i Omega, p^b e_i Omega> summed over i, normalised
        out[d] = np.einsum("pdi,pdi->", np.conj(back[a]), fwd[b]) / m
    return out


# --------------------------------------------------------------------------
# free norm by moment extrapolation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FreeNormEstimate:
    """Extrapolated ``||p||`` with a heuristic error bar."""

    norm: float
    error: float
    moments: tuple
    ratios: tuple
    fitted_limits: tuple
    method: str


def _expand_power_moments(q: NcPoly, k_max: int, spec: FreeSystemSpec, budget: int, cap: int):
    moments = [1.0]
    acc = NcPoly.constant(np.eye(q.m) if q.m > 1 else 1.0)
    for k in range(1, k_max + 1):
        acc = acc * q
        if len(acc) > budget:
            raise BudgetExceededError(
                f"(p*p)^{k} has {len(acc)} words, over the budget of {budget}", partial=tuple(moments)
            )
        moments.append(poly_moment(acc, spec, cap=cap).real)
    return moments


def _fock_self_moments(q: NcPoly, k_max: int, spec: FreeSystemSpec, budget: int):
    """``tau(q^k)`` for self-adjoint ``q`` via the Fock space."""
    half = (k_max + 1) // 2
    depth = q.degree * half
    fock_dim = sum(max(1, _channels(spec, q.families)) ** k for k in range(depth + 1))
    if fock_dim > budget:
        raise BudgetExceededError(f"Fock dimension {fock_dim} over the budget of {budget}")
    return list(fock_power_moments(q, k_max, spec).real)


def _channels(spec, families):
    return sum(1 if spec.kind(f) == SEMICIRCULAR else 2 for f in families)


def _fit_limit(ks: np.ndarray, rs: np.ndarray) -> float:
    """Least-squares fit ``r_k = L - c/k - d/k^2`` and return ``L``."""
    A = np.column_stack([np.ones_like(ks), -1.0 / ks, -1.0 / ks ** 2])
    sol, *_ = np.linalg.lstsq(A, rs, rcond=None)
    return float(sol[0])


def free_norm(p: NcPoly, spec: FreeSystemSpec, k_max: int = 24, method: str = "auto",
              budget: int = tol.MONOMIAL_BUDGET) -> FreeNormEstimate:
    """Estimate ``||p(x_1, ...)||`` from the moments ``m_k = tau((p^* p)^k)``.

    The ratios ``r_k = m_{k+1}/m_k`` tend to ``||p||^2``; they are fitted as
    ``r_k = L - c/k - d/k^2`` over a trailing window and ``sqrt(L)`` is
    returned.  The error estimate is the change in ``sqrt(L)`` between the
    last two windows.  This is an extrapolation heuristic, not a bound.

    Parameters
    ----------
    method : {"auto", "words", "fock"}
        ``"words"`` expands ``(p^* p)^k`` into aggregated words;
        ``"fock"`` evaluates on a truncated Fock space; ``"auto"`` tries
        words first and falls back to the Fock space on budget overflow.

    Raises
    ------
    BudgetExceededError
        When the selected route needs more than ``budget`` words (or Fock
        basis vectors).
    """
    if k_max < 4:
        raise ValueError("k_max must be at least 4")
    q = p.adjoint() * p
    cap = 2 * q.degree * (k_max + 1) + 2
    used = method
    if method in ("words", "auto"):
        try:
            moments = _expand_power_moments(q, k_max + 1, spec, budget, cap)
            used = "words"
        except BudgetExceededError:
            if method == "words":
                raise
            moments = _fock_self_moments(q, k_max + 1, spec, budget)
            used = "fock"
    elif method == "fock":
        moments = _fock_self_moments(q, k_max + 1, spec, budget)
    else:
        raise ValueError(f"unknown method {method!r}")
    mom = np.array(moments, dtype=float)
    if mom[-1] <= 0:
        return FreeNormEstimate(0.0, 0.0, tuple(mom), (), (), used)
    ks = np.arange(1, k_max + 1, dtype=float)
    ratios = mom[2:k_max + 2] / mom[1:k_max + 1]
    window = max(4, k_max // 2)
    limits = []
    for end in (k_max - 1, k_max):
        sel = slice(end - window, end)
        limits.append(_fit_limit(ks[sel], ratios[sel]))
    norms = [math.sqrt(max(l, 0.0)) for l in limits]
    return FreeNormEstimate(norms[-1], abs(norms[-1] - norms[-2]), tuple(mom), tuple(ratios), tuple(limits), used)
