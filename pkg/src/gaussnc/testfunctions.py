"""Test functions for spectral statistics.

Three families are supported, each vectorised over real arrays and carrying
its derivative:

``poly``
    ``phi(x) = sum_k c_k x^k``.
``bump``
    ``exp(1 - 1/(1 - u^2))`` for ``|u| < 1`` with ``u = (x - center)/radius``,
    zero outside; smooth and compactly supported, peak value 1.
``smooth_sin``
    ``sin(x)`` multiplied by a smooth cutoff equal to 1 on ``|x| <= R`` and
    vanishing for ``|x| >= R + width``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f0 = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        f1 = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1 - t, 1.0)), 0.0)
    return f0 / (f0 + f1)


def _smooth_step_prime(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    tt = np.where(inside, t, 0.5)
    f0 = np.exp(-1.0 / tt)
    f1 = np.exp(-1.0 / (1 - tt))
    d = (f0 / tt ** 2 * f1 + f0 * f1 / (1 - tt) ** 2) / (f0 + f1) ** 2
    return np.where(inside, d, 0.0)


@dataclass(frozen=True)
class TestFunction:
    """A real test function ``phi``.

    Parameters
    ----------
    kind : {"poly", "bump", "smooth_sin"}
    params : dict
        ``poly``: ``coeffs`` (constant term first).  ``bump``: ``center``,
        ``radius``.  ``smooth_sin``: ``R`` (default 4), ``width`` (default 1).
    """

    __test__ = False  # not a pytest class

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "poly":
            if "coeffs" not in self.params:
                raise ValueError("poly test function needs 'coeffs'")
        elif self.kind == "bump":
            if self.params.get("radius", 0) <= 0 or "center" not in self.params:
                raise ValueError("bump needs 'center' and a positive 'radius'")
        elif self.kind == "smooth_sin":
            pass
        else:
            raise ValueError(f"unknown test function kind {self.kind!r}")

    # -- constructors ---------------------------------------------------
    @classmethod
    def monomial(cls, k: int) -> "TestFunction":
        return cls("poly", {"coeffs": [0.0] * k + [1.0]})

    @classmethod
    def bump(cls, center: float, radius: float) -> "TestFunction":
        return cls("bump", {"center": float(center), "radius": float(radius)})

    @classmethod
    def from_config(cls, cfg: dict) -> "TestFunction":
        cfg = dict(cfg)
        kind = cfg.pop("kind")
        return cls(kind, cfg)

    def to_config(self) -> dict:
        return {"kind": self.kind, **self.params}

    @property
    def support(self):
        """Closed interval outside which ``phi`` vanishes, or ``None``."""
        if self.kind == "bump":
            c, r = self.params["center"], self.params["radius"]
            return (c - r, c + r)
        if self.kind == "smooth_sin":
            R = self.params.get("R", 4.0) + self.params.get("width", 1.0)
            return (-R, R)
        return None

    # -- evaluation -----------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "poly":
            return np.polynomial.polynomial.polyval(x, np.asarray(self.params["coeffs"], dtype=float))
        if self.kind == "bump":
            u = (x - self.params["center"]) / self.params["radius"]
            inside = np.abs(u) < 1
            uu = np.where(inside, u, 0.0)
            return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - uu ** 2)), 0.0)
        R = self.params.get("R", 4.0)
        w = self.params.get("width", 1.0)
        return np.sin(x) * _smooth_step((R + w - np.abs(x)) / w)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "poly":
            c = np.polynomial.polynomial.polyder(np.asarray(self.params["coeffs"], dtype=float))
            return np.polynomial.polynomial.polyval(x, c)
        if self.kind == "bump":
            r = self.params["radius"]
            u = (x - self.params["center"]) / r
            inside = np.abs(u) < 1
            uu = np.where(inside, u, 0.0)
            val = np.exp(1.0 - 1.0 / (1.0 - uu ** 2))
            return np.where(inside, val * (-2 * uu / (1 - uu ** 2) ** 2) / r, 0.0)
        R = self.params.get("R", 4.0)
        w = self.params.get("width", 1.0)
        t = (R + w - np.abs(x)) / w
        return np.cos(x) * _smooth_step(t) - np.sin(x) * _smooth_step_prime(t) * np.sign(x) / w

    def matrix_trace(self, eigenvalues) -> np.ndarray:
        """Normalised trace of ``phi`` applied through an eigenvalue array ``(..., N)``."""
        return np.mean(self(eigenvalues), axis=-1)
