"""Noncommutative polynomials with optional matrix coefficients.

A polynomial is a finite sum ``sum_w c_w (x) w`` over words ``w`` in letters
``x_j`` and ``x_j'`` (the apostrophe marks the adjoint).  Coefficients are
either complex scalars or ``m x m`` complex matrices with a single ``m``
shared by every term.  Scalars act as multiples of the identity when they
meet matrix coefficients.

The text syntax used in config files is ordinary arithmetic::

    2.5 * x1 * x2' * x1 - x2
    [[1, 0], [0, -1]] * x1 + [[0, 1j], [-1j, 0]]

and :func:`format_poly` writes a canonical form that :func:`parse_poly`
reads back exactly.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .linalg import adjoint, as_cmatrix, check_self_adjoint, kron, operator_norm


class Letter(NamedTuple):
    family: int
    starred: bool = False

    def adjoint(self) -> "Letter":
        return Letter(self.family, not self.starred)

    def __str__(self) -> str:
        return f"x{self.family}" + ("'" if self.starred else "")


_WORDS: dict = {}


def word(*letters) -> tuple:
    """Interned word built from ``Letter`` values or ``(family, starred)`` pairs.

    Interning makes repeated expansion share storage and speeds up hashing
    of the dictionaries that hold polynomial terms.
    """
    w = tuple(l if isinstance(l, Letter) else Letter(int(l[0]), bool(l[1])) for l in letters)
    return _WORDS.setdefault(w, w)


def word_key(w) -> tuple:
    """Length-lexicographic order on ``(family, starred)``."""
    return (len(w), tuple((l.family, l.starred) for l in w))


def word_adjoint(w) -> tuple:
    return word(*(l.adjoint() for l in reversed(w)))


class DimensionError(ValueError):
    """Coefficient or argument dimensions do not match."""


def _is_zero(c) -> bool:
    if isinstance(c, np.ndarray):
        return not np.any(c)
    return c == 0


@dataclass(frozen=True, eq=False)
class NcPoly:
    """Immutable noncommutative polynomial.

    Parameters
    ----------
    terms : dict
        Map from word (tuple of :class:`Letter`) to coefficient.  Zero
        coefficients are dropped.
    m : int
        Coefficient dimension; ``1`` means scalar coefficients.
    """

    terms: dict = field(default_factory=dict)
    m: int = 1

    def __post_init__(self):
        clean = {}
        for w, c in self.terms.items():
            w = word(*w)
            if self.m == 1:
                c = complex(np.asarray(c).reshape(()) if np.ndim(c) else c)
            else:
                c = np.array(c, dtype=complex)
                if c.shape != (self.m, self.m):
                    raise DimensionError(f"coefficient shape {c.shape} in a polynomial with m={self.m}")
                c.setflags(write=False)
            if not _is_zero(c):
                clean[w] = c
        ordered = dict(sorted(clean.items(), key=lambda kv: word_key(kv[0])))
        object.__setattr__(self, "terms", ordered)

    # -- constructors ---------------------------------------------------
    @classmethod
    def letter(cls, family: int, starred: bool = False, coeff=1.0) -> "NcPoly":
        c = np.asarray(coeff)
        m = c.shape[0] if c.ndim == 2 else 1
        return cls({word(Letter(family, starred)): coeff}, m)

    @classmethod
    def constant(cls, coeff) -> "NcPoly":
        c = np.asarray(coeff)
        m = c.shape[0] if c.ndim == 2 else 1
        return cls({(): coeff}, m)

    @classmethod
    def from_word(cls, w, coeff=1.0) -> "NcPoly":
        c = np.asarray(coeff)
        m = c.shape[0] if c.ndim == 2 else 1
        return cls({word(*w): coeff}, m)

    # -- basic queries --------------------------------------------------
    @property
    def degree(self) -> int:
        return max((len(w) for w in self.terms), default=0)

    @property
    def families(self) -> tuple:
        return tuple(sorted({l.family for w in self.terms for l in w}))

    def coefficient(self, w):
        w = word(*w)
        if w in self.terms:
            return self.terms[w]
        return 0j if self.m == 1 else np.zeros((self.m, self.m), dtype=complex)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def __eq__(self, other) -> bool:
        if not isinstance(other, NcPoly):
            other = NcPoly.constant(other)
        a, b = _align(self, other)
        if a.terms.keys() != b.terms.keys():
            return False
        return all(np.array_equal(a.terms[w], b.terms[w]) for w in a.terms)

    def allclose(self, other, atol: float = 1e-12) -> bool:
        a, b = _align(self, other)
        for w in set(a.terms) | set(b.terms):
            if np.max(np.abs(np.asarray(a.coefficient(w) - b.coefficient(w)))) > atol:
                return False
        return True

    __hash__ = None

    # -- algebra ----------------------------------------------------------
    def __add__(self, other) -> "NcPoly":
        if not isinstance(other, NcPoly):
            other = NcPoly.constant(other)
        a, b = _align(self, other)
        terms = dict(a.terms)
        for w, c in b.terms.items():
            terms[w] = terms[w] + c if w in terms else c
        return NcPoly(terms, a.m)

    __radd__ = __add__

    def __neg__(self) -> "NcPoly":
        return NcPoly({w: -c for w, c in self.terms.items()}, self.m)

    def __sub__(self, other) -> "NcPoly":
        if not isinstance(other, NcPoly):
            other = NcPoly.constant(other)
        return self + (-other)

    def __rsub__(self, other) -> "NcPoly":
        return NcPoly.constant(other) - self

    def scale(self, c) -> "NcPoly":
        """Left multiplication by a scalar or ``m x m`` matrix."""
        return NcPoly.constant(c) * self

    def __mul__(self, other) -> "NcPoly":
        if not isinstance(other, NcPoly):
            other = NcPoly.constant(other)
        a, b = _align(self, other)
        terms: dict = {}
        for wa, ca in a.terms.items():
            for wb, cb in b.terms.items():
                w = word(*(wa + wb))
                c = ca @ cb if a.m > 1 else ca * cb
                terms[w] = terms[w] + c if w in terms else c
        return NcPoly(terms, a.m)

    def __rmul__(self, other) -> "NcPoly":
        return NcPoly.constant(other) * self

    def __pow__(self, k: int) -> "NcPoly":
        if int(k) != k or k < 0:
            raise ValueError("only non-negative integer powers")
        out = NcPoly.constant(np.eye(self.m) if self.m > 1 else 1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def adjoint(self) -> "NcPoly":
        """Reverse words, toggle stars, conjugate-transpose coefficients."""
        terms = {}
        for w, c in self.terms.items():
            terms[word_adjoint(w)] = np.conj(c.T) if self.m > 1 else np.conj(c)
        return NcPoly(terms, self.m)

    def is_self_adjoint(self, atol: float = 1e-12) -> bool:
        return self.allclose(self.adjoint(), atol)

    def substitute(self, mapping: dict) -> "NcPoly":
        """Replace letter families by polynomials (``x_j' -> q_j^*``)."""
        out = NcPoly({}, self.m)
        for w, c in self.terms.items():
            term = NcPoly.constant(c)
            for l in w:
                q = mapping.get(l.family, NcPoly.letter(l.family))
                term = term * (q.adjoint() if l.starred else q)
            out = out + term
        return out

    def __str__(self) -> str:
        return format_poly(self)

    def __repr__(self) -> str:
        return f"NcPoly({format_poly(self)!r}, m={self.m})"


def _promote(p: NcPoly, m: int) -> NcPoly:
    if p.m == m:
        return p
    if p.m != 1:
        raise DimensionError(f"cannot combine coefficient dimensions {p.m} and {m}")
    eye = np.eye(m, dtype=complex)
    return NcPoly({w: c * eye for w, c in p.terms.items()}, m)


def _align(a: NcPoly, b: NcPoly):
    m = max(a.m, b.m)
    return _promote(a, m), _promote(b, m)


def x(family: int) -> NcPoly:
    """The letter ``x_family`` as a polynomial."""
    return NcPoly.letter(family)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def evaluate(p: NcPoly, args, n: int | None = None) -> np.ndarray:
    """Substitute matrices for the letters of ``p``.

    Parameters
    ----------
    p : NcPoly
    args : sequence of (n, n) arrays
        ``args[j-1]`` replaces ``x_j``; a starred letter takes its adjoint.
    n : int, optional
        Argument dimension; inferred from ``args`` when omitted.

    Returns
    -------
    ndarray
        ``sum_w c_w (x) w(args)`` of size ``m n``.
    """
    args = [np.asarray(a) for a in args]
    real = all(not np.iscomplexobj(a) for a in args) and all(not np.any(np.imag(c)) for c in p.terms.values())
    dtype = float if real else complex
    args = [a.astype(dtype, copy=False) for a in args]
    if n is None:
        if not args:
            raise DimensionError("n is required when no arguments are given")
        n = args[0].shape[0]
    for j, a in enumerate(args, start=1):
        if a.shape != (n, n):
            raise DimensionError(f"argument {j} has shape {a.shape}, expected ({n}, {n})")
    needed = p.families
    if needed and needed[-1] > len(args):
        raise DimensionError(f"polynomial uses x{needed[-1]} but only {len(args)} arguments given")
    adj = [adjoint(a) for a in args]
    cache: dict = {(): np.eye(n, dtype=dtype)}

    def value(w):
        if w not in cache:
            head, last = w[:-1], w[-1]
            mat = adj[last.family - 1] if last.starred else args[last.family - 1]
            cache[w] = value(head) @ mat
        return cache[w]

    out = np.zeros((p.m * n, p.m * n), dtype=dtype)
    for w, c in p.terms.items():
        c = np.real(c) if real else c
        out += kron(c if p.m > 1 else np.array([[c]]), value(w))
    return out


# --------------------------------------------------------------------------
# circular models
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CircularModel:
    """``s = a0 (x) 1 + sum_j (a_j (x) y_j + a_j^* (x) y_j^*)`` with circular ``y_j``.

    Attributes
    ----------
    a0 : (m, m) ndarray
        Self-adjoint constant term.
    a : tuple of (m, m) ndarray
        Coefficients ``a_1 .. a_r``.
    """

    a0: np.ndarray
    a: tuple = ()

    def __post_init__(self):
        a0 = check_self_adjoint(self.a0, "a0")
        m = a0.shape[0]
        coeffs = []
        for j, aj in enumerate(self.a, start=1):
            aj = as_cmatrix(aj)
            if aj.shape != (m, m):
                raise DimensionError(f"a_{j} has shape {aj.shape}, expected ({m}, {m})")
            coeffs.append(aj)
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "a", tuple(coeffs))

    @property
    def m(self) -> int:
        return self.a0.shape[0]

    @property
    def r(self) -> int:
        return len(self.a)

    @property
    def K(self) -> float:
        """``||a0|| + 16 sum_j ||a_j||``, a crude radius bound used in diagnostics."""
        return operator_norm(self.a0) + 16.0 * sum(operator_norm(aj) for aj in self.a)

    @property
    def spectral_radius_bound(self) -> float:
        """``||a0|| + 4 sum_j ||a_j||``; the spectrum of ``s`` lies inside."""
        return operator_norm(self.a0) + 4.0 * sum(operator_norm(aj) for aj in self.a)

    def eta(self, g: np.ndarray) -> np.ndarray:
        """``sum_j (a_j g a_j^* + a_j^* g a_j)``; broadcasts over leading axes of ``g``."""
        out = np.zeros_like(np.asarray(g, dtype=complex))
        for aj in self.a:
            ajs = adjoint(aj)
            out = out + aj @ g @ ajs + ajs @ g @ aj
        return out

    def negated(self) -> "CircularModel":
        return CircularModel(-self.a0, tuple(-aj for aj in self.a))

    def conjugated(self) -> "CircularModel":
        """Entrywise complex conjugate of every coefficient."""
        return CircularModel(np.conj(self.a0), tuple(np.conj(aj) for aj in self.a))

    def tilde(self) -> "CircularModel":
        """Doubled model with coefficients ``diag(conj(a_j), a_j)``."""
        z = np.zeros((self.m, self.m), dtype=complex)

        def dbl(c):
            return np.block([[np.conj(c), z], [z, c]])

        return CircularModel(dbl(self.a0), tuple(dbl(aj) for aj in self.a))

    def as_poly(self) -> NcPoly:
        """Degree-one polynomial with circular letters ``x_j = y_j``."""
        m = self.m
        p = NcPoly({(): self.a0}, m) if m > 1 else NcPoly({(): self.a0[0, 0]}, 1)
        for j, aj in enumerate(self.a, start=1):
            c, cs = (aj, adjoint(aj)) if m > 1 else (aj[0, 0], np.conj(aj[0, 0]))
            p = p + NcPoly({word(Letter(j, False)): c, word(Letter(j, True)): cs}, m)
        return p


def kron_batch(a: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """``a (x) y`` for a stack ``ys`` of shape (B, n, n)."""
    m = a.shape[0]
    b, n, _ = ys.shape
    return np.einsum("ij,bkl->bikjl", a, ys).reshape(b, m * n, m * n)


def model_matrix(model: CircularModel, samples, n: int | None = None) -> np.ndarray:
    """``S_n = a0 (x) 1_n + sum_j (a_j (x) Y_j + a_j^* (x) Y_j^*)``.

    ``samples`` is a sequence of ``r`` matrices of size ``n``, or an array of
    shape ``(r, B, n, n)`` for a batch of ``B`` draws (then the result has
    shape ``(B, mn, mn)``).
    """
    ys = np.asarray(samples, dtype=complex) if len(samples) else np.zeros((0, 1, n or 1, n or 1))
    if len(ys) != model.r:
        raise DimensionError(f"model has r={model.r} generators but {len(ys)} samples were given")
    batched = ys.ndim == 4
    if not batched:
        ys = ys[:, None]
    if n is None:
        n = ys.shape[-1]
    if ys.shape[-2:] != (n, n):
        raise DimensionError(f"samples have shape {ys.shape[-2:]}, expected ({n}, {n})")
    bsz = ys.shape[1]
    out = np.broadcast_to(np.kron(model.a0, np.eye(n)), (bsz, model.m * n, model.m * n)).copy()
    for aj, y in zip(model.a, ys):
        term = kron_batch(aj, y)
        out += term + adjoint(term)
    return out if batched else out[0]


def semicircular_to_circular(b, r_goe: int, s_goestar: int, a0=None) -> CircularModel:
    """Rewrite ``sum_j b_j (x) x_j`` as a circular model.

    The first ``r_goe`` slots are GOE type, ``x = (y + y^*)/sqrt 2``, giving
    ``a_j = b_j/sqrt 2``; the remaining ``s_goestar`` slots are GOE* type,
    ``x = (y - y^*)/(i sqrt 2)``, giving ``a_j = b_j/(i sqrt 2)``.
    """
    b = [as_cmatrix(bj) for bj in b]
    if len(b) != r_goe + s_goestar:
        raise ValueError(f"expected {r_goe + s_goestar} coefficients, got {len(b)}")
    for j, bj in enumerate(b, start=1):
        check_self_adjoint(bj, f"b_{j}")
    m = b[0].shape[0] if b else (1 if a0 is None else as_cmatrix(a0).shape[0])
    a0 = np.zeros((m, m), dtype=complex) if a0 is None else as_cmatrix(a0)
    root2 = math.sqrt(2)
    a = [bj / root2 for bj in b[:r_goe]] + [bj / (1j * root2) for bj in b[r_goe:]]
    return CircularModel(a0, tuple(a))


def scalar_model(a1=1 / math.sqrt(2), a0=0.0) -> CircularModel:
    """Scalar model ``a0 + a1 y + conj(a1) y^*``; the default is a standard semicircular."""
    return CircularModel(np.array([[a0]], dtype=complex), (np.array([[a1]], dtype=complex),))


# --------------------------------------------------------------------------
# text syntax
# --------------------------------------------------------------------------

class PolySyntaxError(ValueError):
    """Malformed polynomial literal."""


_LETTER_RE = re.compile(r"\b([xy])(\d+)\s*'")


def _format_number(c: complex) -> str:
    c = complex(c)
    if c.imag == 0:
        r = c.real
        if r == int(r) and abs(r) < 1e15:
            return str(int(r))
        return repr(r)
    return repr(c)


def _format_coeff(c, m: int) -> str:
    if m == 1:
        return _format_number(c)
    rows = ", ".join("[" + ", ".join(_format_number(v) for v in row) + "]" for row in c)
    return f"[{rows}]"


def format_poly(p: NcPoly) -> str:
    """Canonical text form; ``parse_poly(format_poly(p)) == p``."""
    if not p.terms:
        return "0"
    parts = []
    for w, c in p.terms.items():
        letters = [str(l) for l in w]
        if p.m == 1:
            neg = complex(c).imag == 0 and complex(c).real < 0
            mag = -c if neg else c
            coeff = None if (mag == 1 and letters) else _format_number(mag)
            body = " * ".join(([coeff] if coeff else []) + letters)
            parts.append(("-", body) if neg else ("+", body))
        else:
            body = " * ".join([_format_coeff(c, p.m)] + letters)
            parts.append(("+", body))
    text = parts[0][1] if parts[0][0] == "+" else "-" + parts[0][1]
    for sign, body in parts[1:]:
        text += f" {sign} {body}"
    return text


def parse_poly(text: str) -> NcPoly:
    """Parse the config-file polynomial syntax.

    Letters are ``x<j>`` or ``y<j>`` (the prefix is cosmetic, ``j >= 1`` is
    the family), a trailing apostrophe takes the adjoint, ``*`` multiplies,
    ``**`` (or ``^``) raises to a non-negative integer power, and nested lists such as
    ``[[1, 0], [0, -1]]`` are matrix coefficients.

    Examples
    --------
    >>> str(parse_poly("2.5 * x1 * x2' * x1"))
    "2.5 * x1 * x2' * x1"
    """
    src = _LETTER_RE.sub(lambda mt: f"{mt.group(1)}{mt.group(2)}__adj", text.strip()).replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise PolySyntaxError(f"cannot parse polynomial {text!r}: {exc.msg}") from None
    return _poly_of(_eval_node(tree.body, text))


def _poly_of(v) -> NcPoly:
    return v if isinstance(v, NcPoly) else NcPoly.constant(v)


_NAME_RE = re.compile(r"^[xy](\d+)(__adj)?$")


def _eval_node(node, text):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)) and not isinstance(node.value, bool):
        return complex(node.value)
    if isinstance(node, ast.Name):
        mt = _NAME_RE.match(node.id)
        if not mt or int(mt.group(1)) < 1:
            raise PolySyntaxError(f"unknown symbol {node.id!r} in {text!r}")
        return NcPoly.letter(int(mt.group(1)), bool(mt.group(2)))
    if isinstance(node, ast.List):
        try:
            mat = np.array(ast.literal_eval(node), dtype=complex)
        except (ValueError, TypeError) as exc:
            raise PolySyntaxError(f"bad matrix literal in {text!r}: {exc}") from None
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise PolySyntaxError(f"matrix coefficient must be square, got shape {mat.shape}")
        return NcPoly.constant(mat)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_node(node.operand, text)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        left = _eval_node(node.left, text)
        if isinstance(node.op, ast.Pow):
            exp = _eval_node(node.right, text)
            if isinstance(exp, NcPoly) or exp.imag != 0 or exp.real != int(exp.real) or exp.real < 0:
                raise PolySyntaxError(f"exponent must be a non-negative integer in {text!r}")
            return _poly_of(left) ** int(exp.real)
        right = _eval_node(node.right, text)
        if isinstance(node.op, ast.Add):
            return _poly_of(left) + right if isinstance(left, NcPoly) or isinstance(right, NcPoly) else left + right
        if isinstance(node.op, ast.Sub):
            return _poly_of(left) - right if isinstance(left, NcPoly) or isinstance(right, NcPoly) else left - right
        if isinstance(node.op, ast.Mult):
            return _poly_of(left) * right if isinstance(left, NcPoly) or isinstance(right, NcPoly) else left * right
        if isinstance(node.op, ast.Div):
            if isinstance(right, NcPoly):
                raise PolySyntaxError(f"division by a polynomial in {text!r}")
            return _poly_of(left).scale(1 / right) if isinstance(left, NcPoly) else left / right
    raise PolySyntaxError(f"unsupported expression {ast.dump(node)[:60]} in {text!r}")
