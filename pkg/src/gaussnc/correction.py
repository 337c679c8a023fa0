"""The 1/n correction distribution Lambda.

For ``S_n`` built from GRM^R samples,

    E (tr_m (x) tr_n) phi(S_n) = (tr_m (x) tau) phi(s) + Lambda(phi)/n + O(1/n^2)

and ``Lambda`` is recovered from ``l = tr_m L`` by Stieltjes inversion,

    Lambda(phi) = lim_{eta -> 0+} (i/2pi) int phi(x) [l(x + i eta) - l(x - i eta)] dx.

The numeric route evaluates the integrand on a grid for several ``eta`` and
extrapolates to ``eta = 0``.  For the four classical ensembles there are
closed forms in terms of

* ``nu_1 = (delta_{-2} + delta_2)/2``,
* ``nu_2`` the arcsine law ``dx / (pi sqrt(4 - x^2))`` on ``(-2, 2)``,
* ``nu_3 = delta_0``:

``goe``: ``(nu_1 - nu_2)/2``, ``goe_star``: ``(nu_3 - nu_2)/2``,
``gse``: ``(nu_2 - nu_1)/4``, ``gse_star``: ``(nu_2 - nu_3)/4``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import tolerances as tol
from .dyson import correction_chain, default_grid, richardson_weights
from .ensembles import Q_J, Q_K, Q_L
from .ncpoly import CircularModel, semicircular_to_circular

CLOSED_FORM_KINDS = ("goe", "goe_star", "gse", "gse_star")

# (atoms, arcsine weight) for each closed form
_CLOSED_FORMS = {
    "goe": (((-2.0, 0.25), (2.0, 0.25)), -0.5),
    "goe_star": (((0.0, 0.5),), -0.5),
    "gse": (((-2.0, -0.125), (2.0, -0.125)), 0.25),
    "gse_star": (((0.0, -0.25),), 0.25),
}


def ensemble_model(kind: str) -> CircularModel:
    """Circular model whose ``S_n`` is distributed as ``kind(n, 1/n)``.

    Supported: ``goe``, ``goe_star``, ``sgrm``, ``gse``, ``gse_star``.
    """
    half = np.eye(2) / 2
    if kind == "goe":
        return semicircular_to_circular([np.eye(1)], 1, 0)
    if kind == "goe_star":
        return semicircular_to_circular([np.eye(1)], 0, 1)
    if kind == "sgrm":
        return semicircular_to_circular([np.eye(1) / math.sqrt(2)] * 2, 1, 1)
    if kind == "gse":
        return semicircular_to_circular([half, 1j * Q_J / 2, 1j * Q_K / 2, 1j * Q_L / 2], 1, 3)
    if kind == "gse_star":
        return semicircular_to_circular([1j * Q_J / 2, 1j * Q_K / 2, 1j * Q_L / 2, half], 3, 1)
    raise ValueError(f"no circular model for ensemble kind {kind!r}")


def arcsine_expectation(phi, nodes: int = 4096) -> float:
    """``int phi d nu_2`` through ``x = 2 sin(theta)``.

    The substitution turns the arcsine law into the uniform law on the
    circle, where the periodic trapezoid rule converges spectrally.
    """
    theta = 2 * math.pi * (np.arange(nodes) + 0.5) / nodes
    return float(np.mean(phi(2 * np.sin(theta))))


def arcsine_density(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 2
    return np.where(inside, 1.0 / (math.pi * np.sqrt(np.where(inside, 4 - x ** 2, 1.0))), 0.0)


@dataclass(frozen=True)
class CorrectionDistribution:
    """A signed distribution of total mass zero.

    Attributes
    ----------
    atoms : tuple of (location, weight)
    grid : ndarray
        Abscissae of ``ac_density``.
    ac_density : ndarray
        Signed density samples.  For the numeric route this is the
        extrapolated smoothed density and also carries the atoms as narrow
        peaks (``atoms`` is then empty).
    method : {"closed_form", "numeric"}
    eta_schedule : tuple
    arcsine_weight : float
        Closed form only: coefficient of the arcsine law, integrated exactly
        by :meth:`apply`.
    eta_densities : ndarray, optional
        Numeric only: per-``eta`` densities before extrapolation.
    """

    atoms: tuple
    grid: np.ndarray
    ac_density: np.ndarray
    method: str
    eta_schedule: tuple = ()
    arcsine_weight: float = 0.0
    kind: str | None = None
    eta_densities: np.ndarray | None = field(default=None, repr=False)

    def apply(self, phi) -> float:
        """``Lambda(phi)`` for a vectorised callable ``phi``."""
        total = math.fsum(w * float(phi(np.array([x]))[0]) for x, w in self.atoms)
        if self.method == "closed_form":
            if self.arcsine_weight:
                total += self.arcsine_weight * arcsine_expectation(phi)
            return float(total)
        return float(total + np.trapezoid(phi(self.grid) * self.ac_density, self.grid))

    def apply_per_eta(self, phi) -> np.ndarray:
        """Numeric only: ``Lambda_eta(phi)`` for each smoothing width."""
        if self.eta_densities is None:
            raise ValueError("per-eta values exist only for numeric distributions")
        vals = phi(self.grid)
        return np.array([np.trapezoid(vals * d, self.grid) for d in self.eta_densities])

    def total_mass(self) -> float:
        return self.apply(lambda x: np.ones_like(np.asarray(x, dtype=float)))

    def write_csv(self, path, atoms_path=None) -> None:
        """Density CSV (x, lambda_density, eta_used, support_flag) plus an atoms CSV."""
        eta_used = min(self.eta_schedule) if self.eta_schedule else 0.0
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "lambda_density", "eta_used", "support_flag"])
            for x, d in zip(self.grid, self.ac_density):
                w.writerow([repr(float(x)), repr(float(d)), repr(eta_used), int(abs(d) > tol.SUPPORT_THRESHOLD)])
        if atoms_path is not None:
            with open(atoms_path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["location", "weight"])
                for x, wt in self.atoms:
                    w.writerow([repr(float(x)), repr(float(wt))])


def closed_form_lambda(kind: str, grid=None) -> CorrectionDistribution:
    """Closed-form ``Lambda`` for ``goe``, ``goe_star``, ``gse``, ``gse_star``."""
    if kind not in _CLOSED_FORMS:
        raise ValueError(f"closed form available only for {CLOSED_FORM_KINDS}, got {kind!r}")
    atoms, weight = _CLOSED_FORMS[kind]
    grid = np.linspace(-3, 3, 601) if grid is None else np.asarray(grid, dtype=float)
    return CorrectionDistribution(atoms, grid, weight * arcsine_density(grid), "closed_form", (), weight, kind)


def correction_lambda(model: CircularModel | None = None, mode: str = "numeric", kind: str | None = None,
                      grid=None, eta_schedule=tol.ETA_SCHEDULE) -> CorrectionDistribution:
    """``Lambda`` for a model (numeric) or a classical ensemble (closed form).

    Parameters
    ----------
    model : CircularModel, optional
        Required for ``mode="numeric"``; defaults to :func:`ensemble_model`
        of ``kind`` when only ``kind`` is given.
    mode : {"numeric", "closed_form"}
    kind : str, optional
        Ensemble label; required for ``mode="closed_form"``.
    grid : array_like, optional
        Numeric grid; the default spacing is an eighth of the smallest
        ``eta`` so that the trapezoid rule resolves the smoothed peaks.
    eta_schedule : sequence of float
    """
    if mode == "closed_form":
        if kind is None:
            raise ValueError("closed_form mode needs an ensemble kind")
        return closed_form_lambda(kind, grid)
    if mode != "numeric":
        raise ValueError(f"unknown mode {mode!r}")
    if model is None:
        if kind is None:
            raise ValueError("numeric mode needs a model or an ensemble kind")
        model = ensemble_model(kind)
    etas = tuple(sorted((float(e) for e in eta_schedule), reverse=True))
    grid = default_grid(model, min(etas) / 8) if grid is None else np.asarray(grid, dtype=float)
    per_eta = np.empty((len(etas), len(grid)))
    warm = {1: (None, None), -1: (None, None)}
    for k, eta in enumerate(etas):
        ls = {}
        for sign in (1, -1):
            G0, Gt0 = warm[sign]
            ch = correction_chain(model, grid + 1j * sign * eta, G0, Gt0)
            warm[sign] = (ch.G, ch.G_tilde)
            ls[sign] = ch.l
        per_eta[k] = np.real(1j / (2 * math.pi) * (ls[1] - ls[-1]))
    dens = richardson_weights(etas) @ per_eta
    return CorrectionDistribution((), grid, dens, "numeric", etas, 0.0, kind, per_eta)
