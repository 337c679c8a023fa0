"""Exact finite-``n`` expectations used as Monte Carlo oracles.

Two kinds of exact values are provided:

* second moments ``E tr X^2`` for the four real/quaternionic ensembles,
  obtained from the entry variances;
* the one-point eigenvalue density of ``GOE(n, 1/n)``, from the classical
  Hermite-function formula for the orthogonal ensemble.  It gives
  ``E tr_n phi(X)`` for any test function, including ones supported in the
  spectral gap where plain sampling never sees an eigenvalue.
"""

from __future__ import annotations

import math

import numpy as np

_SECOND_MOMENT = {
    "goe": lambda n: 1.0 + 1.0 / n,
    "goe_star": lambda n: 1.0 - 1.0 / n,
    "gse": lambda n: 1.0 - 0.5 / n,
    "gse_star": lambda n: 1.0 + 0.5 / n,
    "sgrm": lambda n: 1.0,
}


def exact_second_moment(kind: str, n: int) -> float:
    """``E tr X^2`` for ``X`` drawn from ``kind(n, 1/n)`` (normalised trace).

    >>> exact_second_moment("goe", 200)
    1.005
    """
    if kind not in _SECOND_MOMENT:
        raise ValueError(f"no exact second moment for {kind!r}")
    return _SECOND_MOMENT[kind](n)


def _hermite_rows(x: np.ndarray, upto: int, keep):
    """Hermite functions ``h_k(x) = H_k(x) e^{-x^2/2} / sqrt(2^k k! sqrt(pi))``.

    The three-term recurrence is run on a rescaled pair with a running
    logarithmic scale, so arguments far in the tail (where ``e^{-x^2/2}``
    underflows on its own) stay accurate.

    Returns
    -------
    values : dict
        ``h_k(x)`` for ``k`` in ``keep``.
    sum_sq : ndarray
        ``sum_{k < upto} h_k(x)^2``.
    """
    x = np.asarray(x, dtype=float)
    prev = np.zeros_like(x)
    cur = np.full_like(x, math.pi ** -0.25)
    logs = -0.5 * x ** 2
    values = {}
    acc = np.zeros_like(x)
    acc_log = np.full_like(x, -np.inf)
    for k in range(upto + 1):
        with np.errstate(divide="ignore"):
            lv = 2 * (np.log(np.abs(cur)) + logs)
        if k < upto:
            top = np.maximum(acc_log, lv)
            finite = np.isfinite(top)
            safe = np.where(finite, top, 0.0)
            acc = np.where(finite, acc * np.exp(acc_log - safe) + np.exp(lv - safe), 0.0)
            acc_log = top
        if k in keep:
            values[k] = cur * np.exp(logs)
        nxt = math.sqrt(2.0 / (k + 1)) * x * cur - math.sqrt(k / (k + 1)) * prev
        prev, cur = cur, nxt
        big = np.maximum(np.abs(cur), np.abs(prev))
        scale = np.where(big > 1e100, big, 1.0)
        cur = cur / scale
        prev = prev / scale
        logs = logs + np.log(scale)
    with np.errstate(over="ignore"):
        sum_sq = np.where(np.isfinite(acc_log), acc * np.exp(acc_log), 0.0)
    return values, sum_sq


def _cumulative(f: np.ndarray, h: float) -> np.ndarray:
    """Cumulative Simpson-corrected trapezoid on a uniform grid."""
    trap = np.concatenate([[0.0], np.cumsum(0.5 * h * (f[1:] + f[:-1]))])
    # endpoint correction of the trapezoid rule (second order) using differences
    d = np.gradient(f, h)
    return trap - (h ** 2 / 12.0) * (d - d[0])


def goe_one_point_density(lam, n: int) -> np.ndarray:
    """Mean eigenvalue density of ``GOE(n, 1/n)`` (integrates to one).

    With ``x = lam sqrt(n/2)`` the eigenvalues have joint density
    proportional to ``prod |x_i - x_j| exp(-sum x_i^2 / 2)``, whose
    one-point function is

    ``sum_{k<n} h_k(x)^2 + sqrt(n/2) h_{n-1}(x) int eps(x - t) h_n(t) dt``

    with ``eps(u) = sign(u)/2``, plus ``h_{n-1}(x) / int h_{n-1}`` when ``n``
    is odd.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    lam = np.asarray(lam, dtype=float)
    scale = math.sqrt(n / 2.0)
    x = lam * scale
    span = math.sqrt(2.0 * n) + 14.0
    t = np.linspace(-span, span, 20 * n + 20001)
    h = t[1] - t[0]
    tv, _ = _hermite_rows(t, n, {n - 1, n})
    cum = _cumulative(tv[n], h)
    total = cum[-1]
    below = np.interp(x, t, cum, left=0.0, right=total)
    eps_int = 0.5 * (below - (total - below))
    xv, sum_sq = _hermite_rows(x, n, {n - 1})
    rho = sum_sq + math.sqrt(n / 2.0) * xv[n - 1] * eps_int
    if n % 2:
        rho = rho + xv[n - 1] / np.trapezoid(tv[n - 1], t)
    return rho * scale / n


def goe_expected_trace(phi, n: int, support=None, nodes: int = 4001) -> float:
    """``E tr_n phi(X)`` for ``X`` in ``GOE(n, 1/n)``.

    Parameters
    ----------
    phi : callable
        Vectorised real test function.
    support : (float, float), optional
        Interval outside which ``phi`` vanishes; defaults to the range where
        the density is numerically non-negligible.
    """
    lo, hi = support if support is not None else (-3.0 - 8.0 / math.sqrt(n), 3.0 + 8.0 / math.sqrt(n))
    lam = np.linspace(lo, hi, nodes)
    return float(np.trapezoid(phi(lam) * goe_one_point_density(lam, n), lam))
