"""Monte Carlo experiments.

Every experiment draws independent replicates keyed by ``(n, rep)``: the
replicate ``rep`` at dimension ``n`` reads the stream
``RngStream(seed_n, rep)`` with ``seed_n`` derived from the user seed and
``n``.  Replicates are computed in fixed-size chunks (optionally in worker
processes), concatenated in rep order and reduced with ``math.fsum``, so the
output does not depend on the number of workers.

Each experiment returns an :class:`ExperimentResult` whose rows carry
``(n, statistic, estimate, stderr, prediction, z_score, provenance)``.
Rows that summarise a fit over the whole ``n`` grid use ``n = 0``.
Pass/fail thresholds are not applied here; they belong to the caller.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import tolerances as tol
from .correction import CLOSED_FORM_KINDS, correction_lambda, closed_form_lambda, ensemble_model
from .dyson import DensityProfile, density_and_support
from .ensembles import KINDS, EnsembleSpec, sample, sample_batch
from .finite_n import exact_second_moment, goe_expected_trace
from .free_moments import (
    CIRCULAR,
    SEMICIRCULAR,
    BudgetExceededError,
    FreeSystemSpec,
    free_norm,
    poly_moment,
    power_moments,
    semicircle_moment,
)
from .linalg import imag_part, invert, operator_norm
from .ncpoly import CircularModel, NcPoly, evaluate, model_matrix, parse_poly, scalar_model
from .rng import RngStream
from .testfunctions import TestFunction

CLOSED_FORM = "closed_form"
DYSON_NUMERIC = "dyson_numeric"
PAIRING_ORACLE = "pairing_oracle"
_PROVENANCE_RANK = {CLOSED_FORM: 0, PAIRING_ORACLE: 1, DYSON_NUMERIC: 2}

EXPERIMENTS = (
    "sample-spectrum",
    "dyson-density",
    "correction",
    "master-eq",
    "norm-convergence",
    "spectrum-inclusion",
    "variance-decay",
    "mixed-moments",
)
CONFIG_KEYS = ("experiment", "ensemble", "model", "polynomial", "n_grid", "reps",
               "epsilon", "phi", "eta_schedule", "grid")
RESULT_COLUMNS = ("n", "statistic", "estimate", "stderr", "prediction", "z_score", "provenance")

CHUNK = 64  # replicates per task; fixed so that chunking never depends on workers
BOOTSTRAP_RESAMPLES = 1000
NORM_K_MAX = (24, 16, 12, 8)

# letter kind -> free counterpart
FREE_KIND = {
    "goe": SEMICIRCULAR,
    "goe_star": SEMICIRCULAR,
    "sgrm": SEMICIRCULAR,
    "gse": SEMICIRCULAR,
    "gse_star": SEMICIRCULAR,
    "grm_r": CIRCULAR,
    "grm": CIRCULAR,
    "grm_h": CIRCULAR,
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# --------------------------------------------------------------------------
# named models
# --------------------------------------------------------------------------

def two_interval_model() -> CircularModel:
    """``a0 = diag(3, -3)``, ``a1 = 1/sqrt 2``: spectrum ``[-5, -1] u [1, 5]``."""
    return CircularModel(np.diag([3.0, -3.0]), (np.eye(2) / math.sqrt(2),))


def nonnormal_model() -> CircularModel:
    """2x2 model with ``a1 = e_12`` and a complex second coefficient."""
    a1 = np.array([[0, 1], [0, 0]], dtype=complex)
    a2 = np.array([[0.3, 0.2j], [0.1, -0.4 + 0.1j]])
    return CircularModel(np.diag([0.5, -0.5]), (a1, a2))


NAMED_MODELS = {
    "semicircular": scalar_model,
    "two_interval": two_interval_model,
    "nonnormal": nonnormal_model,
    "goe": lambda: ensemble_model("goe"),
    "goe_star": lambda: ensemble_model("goe_star"),
    "sgrm": lambda: ensemble_model("sgrm"),
    "gse": lambda: ensemble_model("gse"),
    "gse_star": lambda: ensemble_model("gse_star"),
}


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def _complex(v) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(t, (int, float)) for t in v):
        return complex(v[0], v[1])
    if isinstance(v, str):
        return complex(v.replace(" ", "").replace("i", "j"))
    if isinstance(v, (int, float, complex)):
        return complex(v)
    raise ConfigError(f"cannot read {v!r} as a complex number")


def _matrix(v, m: int | None = None) -> np.ndarray:
    """Scalar (times the identity when ``m`` is given) or nested list."""
    if isinstance(v, (list, tuple)) and v and isinstance(v[0], (list, tuple)) and not (
            len(v[0]) == 2 and isinstance(v[0][0], (int, float)) and len(v) == 1):
        rows = [[_complex(e) for e in row] for row in v]
        return np.array(rows, dtype=complex)
    c = _complex(v)
    return c * np.eye(m or 1, dtype=complex)


def _to_jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.ndarray):
        return _to_jsonable(v.tolist())
    if isinstance(v, (list, tuple)):
        return [_to_jsonable(e) for e in v]
    if isinstance(v, dict):
        return {k: _to_jsonable(e) for k, e in v.items()}
    if isinstance(v, np.generic):
        return v.item()
    return v


def model_from_config(v) -> CircularModel:
    """Named model (see ``NAMED_MODELS``) or ``{"a0": ..., "a": [...]}``."""
    if isinstance(v, CircularModel):
        return v
    if isinstance(v, str):
        if v not in NAMED_MODELS:
            raise ConfigError(f"unknown model {v!r}; known: {sorted(NAMED_MODELS)}")
        return NAMED_MODELS[v]()
    if isinstance(v, dict):
        extra = set(v) - {"a0", "a"}
        if extra:
            raise ConfigError(f"unknown model keys {sorted(extra)}")
        coeffs = [_matrix(c) for c in v.get("a", [])]
        m = coeffs[0].shape[0] if coeffs else None
        a0 = _matrix(v.get("a0", 0.0), m)
        return CircularModel(a0, tuple(coeffs))
    raise ConfigError(f"cannot read model from {v!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment description.

    Parameters
    ----------
    experiment : str
        One of :data:`EXPERIMENTS`.
    ensemble : tuple of str
        Ensemble kind of each letter ``x1, x2, ...`` (or of the single
        sampled matrix).
    model : CircularModel, optional
    polynomial : tuple of str
        Polynomials in the text syntax of :func:`gaussnc.ncpoly.parse_poly`.
    n_grid : tuple of int
        Ascending dimensions.
    reps : int
        Replicates per dimension, at least 2.
    epsilon : float
        Fattening of the support in the inclusion experiment.
    phi : TestFunction, optional
    eta_schedule : tuple of float
    grid : object
        ``master-eq``: tuple of spectral parameters (``m x m`` arrays).
        Density experiments: an x-grid array.
    seed, workers : int
        Supplied on the command line rather than in the config file.
    """

    experiment: str
    ensemble: tuple = ()
    model: CircularModel | None = None
    polynomial: tuple = ()
    n_grid: tuple = ()
    reps: int = 2
    epsilon: float = 0.3
    phi: TestFunction | None = None
    eta_schedule: tuple = tol.ETA_SCHEDULE
    grid: object = None
    seed: int = 0
    workers: int = 1
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.reps < 2:
            raise ConfigError("reps must be at least 2")
        ns = list(self.n_grid)
        if any(int(n) != n or n < 1 for n in ns):
            raise ConfigError("n_grid entries must be positive integers")
        if ns != sorted(set(ns)):
            raise ConfigError("n_grid must be strictly ascending")
        for k in self.ensemble:
            if k not in KINDS:
                raise ConfigError(f"unknown ensemble kind {k!r}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if any(not e > 0 for e in self.eta_schedule) or len(self.eta_schedule) < 1:
            raise ConfigError("eta_schedule must hold positive values")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @classmethod
    def from_dict(cls, d: dict, seed: int = 0, workers: int = 1) -> "ExperimentConfig":
        """Build from a JSON-compatible mapping; unknown keys are rejected."""
        unknown = set(d) - set(CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}; allowed: {CONFIG_KEYS}")
        if "experiment" not in d:
            raise ConfigError("config needs an 'experiment' key")
        ens = d.get("ensemble", ())
        ens = (ens,) if isinstance(ens, str) else tuple(ens)
        model = model_from_config(d["model"]) if d.get("model") is not None else None
        poly = d.get("polynomial", ())
        poly = (poly,) if isinstance(poly, str) else tuple(poly)
        phi = d.get("phi")
        if phi is not None and not isinstance(phi, TestFunction):
            phi = TestFunction.from_config(phi)
        grid = d.get("grid")
        if grid is not None and d["experiment"] == "master-eq":
            m = model.m if model is not None else 1
            grid = tuple(_matrix(g, m) for g in grid)
        elif isinstance(grid, dict):
            extra = set(grid) - {"lo", "hi", "step"}
            if extra:
                raise ConfigError(f"unknown grid keys {sorted(extra)}")
            grid = np.arange(grid["lo"], grid["hi"] + 0.5 * grid["step"], grid["step"])
        elif grid is not None:
            grid = np.asarray(grid, dtype=float)
        return cls(
            experiment=d["experiment"],
            ensemble=ens,
            model=model,
            polynomial=poly,
            n_grid=tuple(int(n) for n in d.get("n_grid", ())),
            reps=int(d.get("reps", 2)),
            epsilon=float(d.get("epsilon", 0.3)),
            phi=phi,
            eta_schedule=tuple(float(e) for e in d.get("eta_schedule", tol.ETA_SCHEDULE)),
            grid=grid,
            seed=int(seed),
            workers=int(workers),
            raw=dict(d),
        )

    def config_hash(self) -> str:
        text = json.dumps(_to_jsonable(self.raw), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    n: int
    statistic: str
    estimate: float
    stderr: float
    prediction: float
    z_score: float
    provenance: str

    def as_tuple(self) -> tuple:
        return (self.n, self.statistic, self.estimate, self.stderr, self.prediction, self.z_score, self.provenance)


def _z(estimate: float, prediction: float, stderr: float) -> float:
    if not (math.isfinite(estimate) and math.isfinite(prediction)):
        return math.nan
    diff = estimate - prediction
    if stderr > 0:
        return diff / stderr
    return 0.0 if diff == 0 else math.copysign(math.inf, diff)


def make_row(n, statistic, estimate, stderr, prediction, provenance) -> ResultRow:
    estimate, stderr, prediction = float(estimate), float(stderr), float(prediction)
    return ResultRow(int(n), statistic, estimate, stderr, prediction, _z(estimate, prediction, stderr), provenance)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class ExperimentResult:
    """Rows plus metadata (seed, config hash, versions, wall time)."""

    experiment: str
    rows: list
    metadata: dict = field(default_factory=dict)

    def row(self, statistic: str, n: int | None = None) -> ResultRow:
        for r in self.rows:
            if r.statistic == statistic and (n is None or r.n == n):
                return r
        raise KeyError((statistic, n))

    def select(self, statistic: str) -> list:
        return [r for r in self.rows if r.statistic == statistic]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(RESULT_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(v) for v in r.as_tuple()])

    def write(self, path) -> Path:
        """CSV at ``path`` plus a JSON sidecar ``path.json``; returns the sidecar path."""
        path = Path(path)
        self.write_csv(path)
        side = path.with_name(path.name + ".json")
        side.write_text(json.dumps(_to_jsonable(self.metadata), indent=2, sort_keys=True), encoding="utf-8")
        return side


def versions() -> dict:
    from . import __version__

    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "gaussnc": __version__}


def _metadata(cfg: ExperimentConfig, start: float, **extra) -> dict:
    meta = {"experiment": cfg.experiment, "seed": cfg.seed, "config_hash": cfg.config_hash(),
            "versions": versions(), "wall_time_s": time.perf_counter() - start, "reps": cfg.reps,
            "n_grid": list(cfg.n_grid)}
    meta.update(extra)
    return meta


# --------------------------------------------------------------------------
# replicate engine
# --------------------------------------------------------------------------

def seed_for(seed: int, n: int) -> int:
    """64-bit stream seed for dimension ``n``."""
    state = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(n)]).generate_state(1, np.uint64)
    return int(state[0])


def _job(args):
    fn, payload, n, start, stop, seed_n = args
    return np.stack([np.asarray(fn(payload, n, RngStream(seed_n, rep)), dtype=float) for rep in range(start, stop)])


@contextmanager
def _executor(workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            yield ex
    else:
        yield None


def run_reps(fn, payload, n: int, reps: int, seed: int, executor=None) -> np.ndarray:
    """Evaluate ``fn(payload, n, stream)`` for ``rep = 0 .. reps-1``.

    Returns an array of shape ``(reps, k)`` (per-replicate values in rep
    order).  ``fn`` must be a module-level function so it can be pickled.
    """
    seed_n = seed_for(seed, n)
    jobs = [(fn, payload, n, s, min(s + CHUNK, reps), seed_n) for s in range(0, reps, CHUNK)]
    parts = list(executor.map(_job, jobs)) if executor is not None else [_job(j) for j in jobs]
    out = np.concatenate(parts, axis=0)
    return out.reshape(reps, -1)


def mean_stderr(values) -> tuple:
    """Mean and standard error (sample sd / sqrt(reps)) with compensated sums."""
    v = np.asarray(values, dtype=float)
    k = len(v)
    mean = math.fsum(v) / k
    var = math.fsum((v - mean) ** 2) / (k - 1)
    return mean, math.sqrt(var / k)


def variance_stderr(values) -> tuple:
    """Unbiased sample variance and its large-sample standard error."""
    v = np.asarray(values, dtype=float)
    k = len(v)
    mean = math.fsum(v) / k
    dev = v - mean
    var = math.fsum(dev ** 2) / (k - 1)
    m4 = math.fsum(dev ** 4) / k
    se2 = (m4 - var ** 2 * (k - 3) / (k - 1)) / k
    return var, math.sqrt(max(se2, 0.0))


def loglog_fit(ns, values) -> tuple:
    """Slope of ``log|values|`` against ``log n`` and its regression stderr.

    Returns ``(nan, nan)`` when a value is zero or non-finite.
    """
    ns = np.asarray(ns, dtype=float)
    vals = np.abs(np.asarray(values, dtype=float))
    if len(ns) < 2 or np.any(~np.isfinite(vals)) or np.any(vals == 0):
        return math.nan, math.nan
    X = np.log(ns)
    Y = np.log(vals)
    A = np.column_stack([np.ones_like(X), X])
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    if len(ns) < 3:
        return float(coef[1]), math.nan
    resid = Y - A @ coef
    s2 = float(resid @ resid) / (len(ns) - 2)
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[1]), math.sqrt(cov[1, 1])


# --------------------------------------------------------------------------
# drawing
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Subject:
    """What one replicate samples: an ensemble matrix or a model ``S_n``."""

    kind: str | None = None
    model: CircularModel | None = None

    def draw(self, n: int, stream: RngStream) -> np.ndarray:
        if self.model is not None:
            ys = [sample(EnsembleSpec.normalized("grm_r", n), stream) for _ in range(self.model.r)]
            return realify(model_matrix(self.model, ys, n) if ys else np.kron(self.model.a0, np.eye(n)))
        return realify(sample(EnsembleSpec.normalized(self.kind, n), stream))

    @property
    def coefficient_norm_sq(self) -> float:
        """``sum_j ||a_j||^2`` of the model (the ensemble's own model for a kind)."""
        model = self.model if self.model is not None else ensemble_model(self.kind)
        return math.fsum(operator_norm(a) ** 2 for a in model.a)

    def as_model(self) -> CircularModel:
        return self.model if self.model is not None else ensemble_model(self.kind)


def _subject(cfg: ExperimentConfig) -> Subject:
    if cfg.model is not None:
        return Subject(model=cfg.model)
    if len(cfg.ensemble) != 1:
        raise ConfigError(f"{cfg.experiment} needs a model or exactly one ensemble kind")
    return Subject(kind=cfg.ensemble[0])


def realify(a: np.ndarray) -> np.ndarray:
    """Drop an identically zero imaginary part (real LAPACK paths are faster)."""
    if np.iscomplexobj(a) and not np.any(a.imag):
        return np.ascontiguousarray(a.real)
    return a


def draw_letters(kinds, n: int, stream: RngStream) -> list:
    """One independent matrix per letter, in letter order, from one stream."""
    return [realify(sample_batch(EnsembleSpec.normalized(k, n), stream, 1)[0]) for k in kinds]


def poly_trace(s: np.ndarray, coeffs) -> float:
    """Normalised ``tr sum_k c_k s^k`` from matrix powers.

    Uses ``tr(s^k) = sum_ab (s^i)_ab (s^j)_ba`` with ``i + j = k`` so only
    powers up to ``ceil(deg/2)`` are formed.
    """
    coeffs = list(coeffs)
    deg = len(coeffs) - 1
    half = (deg + 1) // 2
    dim = s.shape[0]
    powers = [None, s]
    for _ in range(2, half + 1):
        powers.append(powers[-1] @ s)
    total = 0.0
    for k, c in enumerate(coeffs):
        if c == 0:
            continue
        if k == 0:
            total += c
            continue
        i = k // 2
        j = k - i
        tr = np.trace(powers[j]) if i == 0 else np.sum(powers[i] * powers[j].T)
        total += c * float(np.real(tr)) / dim
    return total


def spectral_trace(phi: TestFunction, s: np.ndarray) -> float:
    """``tr phi(s)``: matrix powers for polynomials, eigenvalues otherwise."""
    if phi.kind == "poly":
        return poly_trace(s, phi.params["coeffs"])
    ev = np.linalg.eigvalsh(s)
    return float(phi.matrix_trace(ev))


# --------------------------------------------------------------------------
# sample-spectrum and dyson-density
# --------------------------------------------------------------------------

@dataclass
class SpectrumSample:
    """Eigenvalues per ``(n, rep)``."""

    eigenvalues: dict
    metadata: dict = field(default_factory=dict)

    def write(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "rep", "index", "eigenvalue"])
            for n in sorted(self.eigenvalues):
                for rep, ev in enumerate(self.eigenvalues[n]):
                    for i, e in enumerate(ev):
                        w.writerow([n, rep, i, repr(float(e))])
        side = path.with_name(path.name + ".json")
        side.write_text(json.dumps(_to_jsonable(self.metadata), indent=2, sort_keys=True), encoding="utf-8")
        return side


def _eigs_task(subject: Subject, n: int, stream: RngStream):
    return np.linalg.eigvalsh(subject.draw(n, stream))


def run_sample_spectrum(cfg: ExperimentConfig) -> SpectrumSample:
    start = time.perf_counter()
    subject = _subject(cfg)
    out = {}
    with _executor(cfg.workers) as ex:
        for n in cfg.n_grid:
            out[n] = run_reps(_eigs_task, subject, n, cfg.reps, cfg.seed, ex)
    return SpectrumSample(out, _metadata(cfg, start))


def write_density_csv(profile: DensityProfile, path) -> None:
    eta_used = min(profile.eta_schedule)
    flags = profile.support_flag()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "density", "eta_used", "support_flag"])
        for x_, d, f in zip(profile.grid, profile.density, flags):
            w.writerow([repr(float(x_)), repr(float(d)), repr(eta_used), int(f)])


def run_dyson_density(cfg: ExperimentConfig) -> DensityProfile:
    model = _subject(cfg).as_model()
    return density_and_support(model, cfg.grid, cfg.eta_schedule)


# --------------------------------------------------------------------------
# 1/n correction
# --------------------------------------------------------------------------

def _phi_task(payload, n: int, stream: RngStream):
    subject, phi = payload
    return [spectral_trace(phi, subject.draw(n, stream))]


def semicircle_expectation(phi: TestFunction, nodes: int = 4096) -> float:
    """``int phi`` against the standard semicircle law.

    Polynomials use Catalan numbers; other functions use the substitution
    ``x = 2 cos(theta)`` and the midpoint rule (spectrally accurate for
    smooth ``phi``).
    """
    if phi.kind == "poly":
        return math.fsum(c * semicircle_moment(k) for k, c in enumerate(phi.params["coeffs"]) if k % 2 == 0)
    theta = math.pi * (np.arange(nodes) + 0.5) / nodes
    return float(2.0 * np.mean(phi(2 * np.cos(theta)) * np.sin(theta) ** 2))


def _tau_and_lambda(subject: Subject, phi: TestFunction, eta_schedule):
    """``(tau phi(s), Lambda(phi), provenance of each)``."""
    if subject.kind in CLOSED_FORM_KINDS:
        lam = closed_form_lambda(subject.kind)
        return semicircle_expectation(phi), lam.apply(phi), CLOSED_FORM, CLOSED_FORM, lam
    model = subject.as_model()
    if phi.kind == "poly":
        coeffs = phi.params["coeffs"]
        mom = power_moments(model.as_poly(), len(coeffs) - 1, FreeSystemSpec.circular()).real
        tau = math.fsum(c * mm for c, mm in zip(coeffs, mom))
        tau_prov = PAIRING_ORACLE
    else:
        prof = density_and_support(model, eta_schedule=eta_schedule)
        tau = float(np.trapezoid(phi(prof.grid) * prof.extrapolated, prof.grid))
        tau_prov = DYSON_NUMERIC
    lam = correction_lambda(model, eta_schedule=eta_schedule)
    return tau, lam.apply(phi), tau_prov, DYSON_NUMERIC, lam


def _worst(*provs) -> str:
    return max(provs, key=_PROVENANCE_RANK.__getitem__)


def _exact_value(subject: Subject, phi: TestFunction, n: int):
    """Exact finite-``n`` ``E tr phi`` when available, else ``None``."""
    if subject.kind is not None and phi.kind == "poly" and len(phi.params["coeffs"]) <= 3:
        c = list(phi.params["coeffs"]) + [0.0, 0.0]
        return c[0] + c[2] * exact_second_moment(subject.kind, n)
    if subject.kind == "goe":
        return goe_expected_trace(phi, n, phi.support)
    return None


def run_moment_correction(cfg: ExperimentConfig) -> ExperimentResult:
    """``E (tr_m (x) tr_n) phi(S_n)`` against ``tau phi(s) + Lambda(phi)/n``.

    Rows per ``n``:

    ``E_trphi``
        Monte Carlo mean vs ``tau phi(s) + Lambda(phi)/n``.
    ``n_residual``
        ``n (mean - tau phi(s))`` vs ``Lambda(phi)``.
    ``E_trphi_exact``
        Monte Carlo mean vs the exact finite-``n`` value (when one exists).

    Rows over the grid (``n = 0``): ``leftover_power`` fits the ``n``-power
    of ``|mean - tau - Lambda/n|``; ``leftover_power_exact`` does the same
    with exact values in place of the Monte Carlo means.
    """
    start = time.perf_counter()
    if cfg.phi is None:
        raise ConfigError("correction needs a test function 'phi'")
    subject = _subject(cfg)
    phi = cfg.phi
    tau, lam_phi, tau_prov, lam_prov, lam = _tau_and_lambda(subject, phi, cfg.eta_schedule)
    prov = _worst(tau_prov, lam_prov)
    rows, means, exacts = [], [], []
    with _executor(cfg.workers) as ex:
        for n in cfg.n_grid:
            vals = run_reps(_phi_task, (subject, phi), n, cfg.reps, cfg.seed, ex)[:, 0]
            mean, se = mean_stderr(vals)
            means.append(mean)
            rows.append(make_row(n, "E_trphi", mean, se, tau + lam_phi / n, prov))
            rows.append(make_row(n, "n_residual", n * (mean - tau), n * se, lam_phi, prov))
            exact = _exact_value(subject, phi, n)
            exacts.append(exact)
            if exact is not None:
                rows.append(make_row(n, "E_trphi_exact", mean, se, exact, CLOSED_FORM))
    ns = list(cfg.n_grid)
    leftovers = [mu - tau - lam_phi / n for mu, n in zip(means, ns)]
    slope, slope_se = loglog_fit(ns, leftovers)
    rows.append(make_row(0, "leftover_power", slope, slope_se, -2.0, prov))
    if exacts and all(e is not None for e in exacts):
        slope, slope_se = loglog_fit(ns, [e - tau - lam_phi / n for e, n in zip(exacts, ns)])
        rows.append(make_row(0, "leftover_power_exact", slope, slope_se, -2.0, CLOSED_FORM))
    meta = _metadata(cfg, start, tau=tau, lambda_phi=lam_phi, lambda_method=lam.method,
                     exact_values=[e for e in exacts if e is not None])
    result = ExperimentResult(cfg.experiment, rows, meta)
    result.correction = lam
    return result


# --------------------------------------------------------------------------
# master equation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ResolventSample:
    """One draw of the resolvent data entering the master equation.

    Attributes
    ----------
    lam : (m, m) ndarray
    H : (m, m) ndarray
        ``(id (x) tr_n)[(lam (x) 1 - S_n)^{-1}]``.
    Ht : (m, m) ndarray
        ``(id (x) tr_n)[(lam (x) 1 - S_n)^{-t}]``.
    T : (m, m, m, m) ndarray
        ``T[i, u, v, q] = (1/n) sum_{g, a} A[u g, i a] A[v g, q a]`` with
        ``A`` the resolvent; every transpose-resolvent sandwich of the
        remainder is a contraction of ``T``.
    """

    lam: np.ndarray
    H: np.ndarray
    Ht: np.ndarray
    T: np.ndarray


def resolvent_sample(lam: np.ndarray, s: np.ndarray, m: int, n: int) -> ResolventSample:
    a = invert(np.kron(lam, np.eye(n)) - s)
    a4 = a.reshape(m, n, m, n)
    h = np.einsum("iaja->ij", a4) / n
    t = np.einsum("ugpa,vgqa->puvq", a4, a4, optimize=True) / n
    return ResolventSample(lam, h, h.T.copy(), t)


def master_terms(model: CircularModel, rs: ResolventSample, n: int) -> tuple:
    """``(M, R)`` for one draw: the left side of the master equation and the remainder.

    ``M = (a0 - lam) H + sum_j (a_j H a_j^* H + a_j^* H a_j H) + 1`` and
    ``R = sum_b sum_kl b e_kl (id (x) tr_n)[A^t (e_kl b (x) 1) A]`` over
    ``b`` in ``{a_j, a_j^*}``; the identity states ``E M = -E R / n``.
    """
    m = model.m
    h = rs.H
    big_m = (model.a0 - rs.lam) @ h + model.eta(h) @ h + np.eye(m)
    r = np.zeros((m, m), dtype=complex)
    for aj in model.a:
        for b in (aj, aj.conj().T):
            r += np.einsum("ik,lv,lkvq->iq", b, b, rs.T)
    return big_m, r


def _meq_task(payload, n: int, stream: RngStream):
    model, lams = payload
    ys = [sample(EnsembleSpec.normalized("grm_r", n), stream) for _ in range(model.r)]
    s = model_matrix(model, ys, n) if ys else np.kron(model.a0, np.eye(n)).astype(complex)
    out = []
    for lam in lams:
        big_m, r = master_terms(model, resolvent_sample(lam, s, model.m, n), n)
        for mat in (big_m, r):
            out.append(mat.real.ravel())
            out.append(mat.imag.ravel())
    return np.concatenate(out)


def _matrix_mean(block: np.ndarray, m: int) -> tuple:
    """Mean of complex m x m per-rep data stored as (re, im) columns, with per-entry stderr."""
    means, ses = [], []
    for col in block.T:
        mu, se = mean_stderr(col)
        means.append(mu)
        ses.append(se)
    means = np.array(means)
    ses = np.array(ses)
    k = m * m
    mean = (means[:k] + 1j * means[k:]).reshape(m, m)
    return mean, ses


def run_master_equation(cfg: ExperimentConfig) -> ExperimentResult:
    """Check ``E{M} + E{R}/n = 0`` per ``n`` and spectral parameter.

    Rows ``meq_residual[k]`` report ``||mean(M + R/n)||_F`` with stderr the
    root sum of squared per-entry standard errors (prediction 0);
    ``meq_M[k]`` and ``meq_R_over_n[k]`` report the two parts.
    """
    start = time.perf_counter()
    model = cfg.model
    if model is None:
        if len(cfg.ensemble) == 1:
            model = ensemble_model(cfg.ensemble[0])
        else:
            raise ConfigError("master-eq needs a model")
    if not cfg.grid:
        raise ConfigError("master-eq needs spectral parameters in 'grid'")
    lams = tuple(np.asarray(l_, dtype=complex) for l_ in cfg.grid)
    for l_ in lams:
        if l_.shape != (model.m, model.m):
            raise ConfigError(f"spectral parameter of shape {l_.shape}, model has m={model.m}")
        if np.min(np.linalg.eigvalsh(imag_part(l_))) <= 0:
            raise ConfigError("master-eq needs Im(lambda) positive definite")
    m = model.m
    k = m * m
    rows = []
    with _executor(cfg.workers) as ex:
        for n in cfg.n_grid:
            data = run_reps(_meq_task, (model, lams), n, cfg.reps, cfg.seed, ex)
            for idx in range(len(lams)):
                base = idx * 4 * k
                big_m = data[:, base:base + 2 * k]
                rem = data[:, base + 2 * k:base + 4 * k]
                q = big_m + rem / n
                q_mean, q_se = _matrix_mean(q, m)
                m_mean, m_se = _matrix_mean(big_m, m)
                r_mean, r_se = _matrix_mean(rem / n, m)
                rows.append(make_row(n, f"meq_residual[{idx}]", np.linalg.norm(q_mean),
                                     math.sqrt(float(np.sum(q_se ** 2))), 0.0, CLOSED_FORM))
                rows.append(make_row(n, f"meq_M[{idx}]", np.linalg.norm(m_mean),
                                     math.sqrt(float(np.sum(m_se ** 2))), math.nan, CLOSED_FORM))
                rows.append(make_row(n, f"meq_R_over_n[{idx}]", np.linalg.norm(r_mean),
                                     math.sqrt(float(np.sum(r_se ** 2))), math.nan, CLOSED_FORM))
    meta = _metadata(cfg, start, lambdas=[l_.tolist() for l_ in lams], m=m, r=model.r)
    return ExperimentResult(cfg.experiment, rows, meta)


# --------------------------------------------------------------------------
# norm convergence
# --------------------------------------------------------------------------

def _parse_single(cfg: ExperimentConfig) -> NcPoly:
    if len(cfg.polynomial) != 1:
        raise ConfigError(f"{cfg.experiment} needs exactly one polynomial")
    return parse_poly(cfg.polynomial[0])


def _check_letters(p: NcPoly, kinds) -> None:
    if p.families and p.families[-1] > len(kinds):
        raise ConfigError(f"polynomial uses x{p.families[-1]} but only {len(kinds)} ensemble kinds are given")
    quat = {k in ("gse", "gse_star", "grm_h") for k in kinds}
    if len(quat) > 1:
        raise ConfigError("cannot mix quaternionic (2n) and real (n) letters")


def free_spec_for(kinds) -> FreeSystemSpec:
    """Free counterpart of a letter assignment."""
    return FreeSystemSpec({j: FREE_KIND[k] for j, k in enumerate(kinds, start=1)})


# 2x2 realisation of one semicircular letter by four semicircular ones:
# Z = (1/sqrt2) [[(z1 - z2)/sqrt2, (z4 + i z3)/sqrt2], [(z4 - i z3)/sqrt2, (z1 + z2)/sqrt2]]
SYMPLECTIC_COEFFS = (
    np.eye(2, dtype=complex) / 2,
    np.diag([-1.0, 1.0]).astype(complex) / 2,
    np.array([[0, 1j], [-1j, 0]]) / 2,
    np.array([[0, 1], [1, 0]], dtype=complex) / 2,
)


def symplectic_free_model(p: NcPoly, kinds) -> tuple:
    """Rewrite ``p`` with each GSE/GSE* letter replaced by its 2x2 semicircular model.

    Other letters become ``1_2 (x) x``.  Returns ``(q, spec)`` with ``q`` of
    matrix size 2 over fresh families.
    """
    mapping = {}
    kinds_out = {}
    nxt = 1
    for j, kind in enumerate(kinds, start=1):
        if kind in ("gse", "gse_star"):
            z = NcPoly({}, 2)
            for c in SYMPLECTIC_COEFFS:
                z = z + NcPoly.letter(nxt, coeff=c)
                kinds_out[nxt] = SEMICIRCULAR
                nxt += 1
            mapping[j] = z
        else:
            mapping[j] = NcPoly.letter(nxt, coeff=np.eye(2, dtype=complex))
            kinds_out[nxt] = FREE_KIND[kind]
            nxt += 1
    lifted = NcPoly({w: (c * np.eye(2) if np.ndim(c) == 0 else c) for w, c in p.terms.items()}, 2) \
        if p.m == 1 else p
    return lifted.substitute(mapping), FreeSystemSpec(kinds_out)


def _norm_task(payload, n: int, stream: RngStream):
    p, kinds = payload
    mats = draw_letters(kinds, n, stream)
    return [operator_norm(evaluate(p, mats))]


def free_norm_adaptive(p: NcPoly, spec: FreeSystemSpec):
    """``free_norm`` at the largest ``k_max`` in ``NORM_K_MAX`` within budget."""
    last = None
    for k in NORM_K_MAX:
        try:
            return free_norm(p, spec, k_max=k), k
        except BudgetExceededError as exc:
            last = exc
    raise last


def run_norm_convergence(cfg: ExperimentConfig) -> ExperimentResult:
    """Sampled ``||p(X_1, ...)||`` (median over ``reps`` draws) against ``free_norm``.

    For GSE/GSE* letters the oracle is the same norm in a semicircular
    system; the 2x2 realisation of :func:`symplectic_free_model` is checked
    against it through the first few moments of ``p^* p`` (metadata key
    ``symplectic_moment_gap``).  The individual draws are kept in the
    metadata under ``draws``.
    """
    start = time.perf_counter()
    p = _parse_single(cfg)
    kinds = cfg.ensemble
    _check_letters(p, kinds)
    spec = free_spec_for(kinds)
    est, k_used = free_norm_adaptive(p, spec)
    extra = {"free_norm": est.norm, "free_norm_error": est.error, "free_norm_method": est.method,
             "free_norm_k_max": k_used}
    if any(k in ("gse", "gse_star") for k in kinds):
        q, qspec = symplectic_free_model(p, kinds)
        qq = q.adjoint() * q
        pp = p.adjoint() * p
        gap = 0.0
        acc_q = NcPoly.constant(np.eye(2, dtype=complex))
        acc_p = NcPoly.constant(1.0)
        for _ in range(3):
            acc_q = acc_q * qq
            acc_p = acc_p * pp
            gap = max(gap, abs(poly_moment(acc_q, qspec) - poly_moment(acc_p, spec)))
        extra["symplectic_moment_gap"] = gap
    rows = []
    draws = {}
    with _executor(cfg.workers) as ex:
        for n in cfg.n_grid:
            vals = run_reps(_norm_task, (p, kinds), n, cfg.reps, cfg.seed, ex)[:, 0]
            draws[str(n)] = vals.tolist()
            med = float(np.median(vals))
            _, se = mean_stderr(vals)
            rows.append(make_row(n, "norm_median", med, math.sqrt(math.pi / 2) * se, est.norm, PAIRING_ORACLE))
            rows.append(make_row(n, "abs_deviation", abs(med - est.norm), math.sqrt(math.pi / 2) * se, 0.0,
                                 PAIRING_ORACLE))
            rows.append(make_row(n, "max_draw_deviation", float(np.max(np.abs(vals - est.norm))), se, 0.0,
                                 PAIRING_ORACLE))
    rows.append(make_row(0, "free_norm", est.norm, est.error, est.norm, PAIRING_ORACLE))
    return ExperimentResult(cfg.experiment, rows, _metadata(cfg, start, draws=draws, **extra))


# --------------------------------------------------------------------------
# spectrum inclusion
# --------------------------------------------------------------------------

def _inclusion_task(payload, n: int, stream: RngStream):
    subject, intervals, eps = payload
    ev = np.linalg.eigvalsh(subject.draw(n, stream))
    dist = np.full(ev.shape, np.inf)
    for a, b in intervals:
        dist = np.minimum(dist, np.maximum(np.maximum(a - ev, ev - b), 0.0))
    inside = float(np.all(dist < eps))
    gap_hits = 0
    for (_, b), (a2, _) in zip(intervals[:-1], intervals[1:]):
        gap_hits += int(np.sum((ev > b + eps) & (ev < a2 - eps)))
    return [inside, float(gap_hits == 0), float(np.max(dist))]


def run_spectrum_inclusion(cfg: ExperimentConfig) -> ExperimentResult:
    """Fraction of draws with every eigenvalue within ``epsilon`` of the support.

    Rows per ``n``: ``inclusion_fraction``, ``gap_clear_fraction`` (models
    whose support has a gap) and ``max_excursion`` (mean distance of the
    farthest eigenvalue from the support).
    """
    start = time.perf_counter()
    subject = _subject(cfg)
    prof = density_and_support(subject.as_model(), eta_schedule=cfg.eta_schedule)
    intervals = tuple(prof.support_intervals)
    if not intervals:
        raise RuntimeError("empty support; cannot test inclusion")
    rows = []
    with _executor(cfg.workers) as ex:
        for n in cfg.n_grid:
            data = run_reps(_inclusion_task, (subject, intervals, cfg.epsilon), n, cfg.reps, cfg.seed, ex)
            for col, name in ((0, "inclusion_fraction"), (1, "gap_clear_fraction")):
                if name == "gap_clear_fraction" and len(intervals) < 2:
                    continue
                frac = math.fsum(data[:, col]) / cfg.reps
                se = math.sqrt(frac * (1 - frac) / cfg.reps)
                rows.append(make_row(n, name, frac, se, 1.0, DYSON_NUMERIC))
            mu, se = mean_stderr(data[:, 2])
            rows.append(make_row(n, "max_excursion", mu, se, 0.0, DYSON_NUMERIC))
    meta = _metadata(cfg, start, support=[list(iv) for iv in intervals], epsilon=cfg.epsilon)
    return ExperimentResult(cfg.experiment, rows, meta)


# --------------------------------------------------------------------------
# variance decay
# --------------------------------------------------------------------------

def _poly_task(payload, n: int, stream: RngStream):
    polys, kinds = payload
    mats = draw_letters(kinds, n, stream)
    dim = mats[0].shape[0]
    out = []
    for p in polys:
        tr = np.trace(evaluate(p, mats)) / (dim * p.m)
        out.extend([tr.real, tr.imag])
    return out


def _psi_task(payload, n: int, stream: RngStream):
    subject, phi = payload
    ev = np.linalg.eigvalsh(subject.draw(n, stream))
    return [float(phi.matrix_trace(ev)), float(np.mean(np.abs(phi.derivative(ev)) ** 2))]


def _bootstrap_fraction(values, grads, bound_factor, seed_n) -> float:
    """Share of bootstrap resamples with ``Var* <= bound_factor * mean(grads*)``."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed_n, 0xB007], dtype=np.uint64)))
    k = len(values)
    hits = 0
    for _ in range(BOOTSTRAP_RESAMPLES):
        idx = rng.integers(0, k, size=k)
        v = values[idx]
        g = grads[idx]
        hits += int(np.var(v, ddof=1) <= bound_factor * np.mean(g))
    return hits / BOOTSTRAP_RESAMPLES


def run_variance_decay(cfg: ExperimentConfig) -> ExperimentResult:
    """Variance of a trace statistic per ``n`` and its decay exponent.

    With ``polynomial`` and ``ensemble`` letters the statistic is
    ``Re tr_n p(X)``; with ``phi`` it is ``(tr_m (x) tr_n) phi(S_n)`` and the
    bound ``(4/n^2) (sum_j ||a_j||^2) E{tr |phi'|^2(S_n)}`` is also checked
    (rows ``var_bound`` and ``bootstrap_bound_fraction``).
    """
    start = time.perf_counter()
    ns = list(cfg.n_grid)
    if len(ns) < 3 or ns[-1] < 4 * ns[0]:
        raise ConfigError("variance-decay needs at least 3 dimensions spanning a factor of 4")
    rows, variances = [], []
    use_phi = cfg.phi is not None
    if use_phi:
        subject = _subject(cfg)
        a_norm = subject.coefficient_norm_sq
    else:
        p = _parse_single(cfg)
        _check_letters(p, cfg.ensemble)
    with _executor(cfg.workers) as ex:
        for n in ns:
            if use_phi:
                data = run_reps(_psi_task, (subject, cfg.phi), n, cfg.reps, cfg.seed, ex)
                vals = data[:, 0]
            else:
                vals = run_reps(_poly_task, ((p,), cfg.ensemble), n, cfg.reps, cfg.seed, ex)[:, 0]
            var, se = variance_stderr(vals)
            variances.append(var)
            rows.append(make_row(n, "variance", var, se, math.nan, CLOSED_FORM))
            if use_phi:
                factor = 4.0 / n ** 2 * a_norm
                gmean, gse = mean_stderr(data[:, 1])
                rows.append(make_row(n, "var_bound", var, se, factor * gmean, CLOSED_FORM))
                frac = _bootstrap_fraction(vals, data[:, 1], factor, seed_for(cfg.seed, n))
                rows.append(make_row(n, "bootstrap_bound_fraction", frac,
                                     math.sqrt(max(frac * (1 - frac), 0.25 / BOOTSTRAP_RESAMPLES) / BOOTSTRAP_RESAMPLES),
                                     1.0, CLOSED_FORM))
    slope, slope_se = loglog_fit(ns, variances)
    rows.append(make_row(0, "variance_slope", slope, slope_se, -2.0, CLOSED_FORM))
    return ExperimentResult(cfg.experiment, rows, _metadata(cfg, start))


# --------------------------------------------------------------------------
# mixed moments
# --------------------------------------------------------------------------

def run_mixed_moments(cfg: ExperimentConfig) -> ExperimentResult:
    """``E tr_n p(X)`` for each listed polynomial against ``tau(p)`` from pairings.

    Rows ``tr[<text>]`` per ``n`` hold the real part of the Monte Carlo
    mean; ``deviation[<text>]`` rows hold ``|mean - tau(p)|``.
    """
    start = time.perf_counter()
    if not cfg.polynomial:
        raise ConfigError("mixed-moments needs a list of polynomials")
    polys = tuple(parse_poly(t) for t in cfg.polynomial)
    for p in polys:
        _check_letters(p, cfg.ensemble)
    spec = free_spec_for(cfg.ensemble)
    preds = [poly_moment(p, spec) for p in polys]
    rows = []
    with _executor(cfg.workers) as ex:
        for n in cfg.n_grid:
            data = run_reps(_poly_task, (polys, cfg.ensemble), n, cfg.reps, cfg.seed, ex)
            for i, (text, pred) in enumerate(zip(cfg.polynomial, preds)):
                mu, se = mean_stderr(data[:, 2 * i])
                rows.append(make_row(n, f"tr[{text}]", mu, se, pred.real, PAIRING_ORACLE))
                rows.append(make_row(n, f"deviation[{text}]", abs(mu - pred.real), se, 0.0, PAIRING_ORACLE))
    meta = _metadata(cfg, start, predictions=[complex(p_) for p_ in preds])
    return ExperimentResult(cfg.experiment, rows, meta)


RUNNERS = {
    "sample-spectrum": run_sample_spectrum,
    "dyson-density": run_dyson_density,
    "correction": run_moment_correction,
    "master-eq": run_master_equation,
    "norm-convergence": run_norm_convergence,
    "spectrum-inclusion": run_spectrum_inclusion,
    "variance-decay": run_variance_decay,
    "mixed-moments": run_mixed_moments,
}


def run(cfg: ExperimentConfig):
    """Dispatch on ``cfg.experiment``."""
    return RUNNERS[cfg.experiment](cfg)
