"""Gaussian random matrices, free probability oracles and the 1/n correction."""

__version__ = "0.1.0"

from .correction import CorrectionDistribution, closed_form_lambda, correction_lambda, ensemble_model
from .dyson import (
    DensityProfile,
    DirectionalSolver,
    L_of,
    R_of,
    correction_chain,
    density_and_support,
    l_of,
    solve_G,
    solve_G_batch,
    solve_G_directional,
)
from .ensembles import EnsembleSpec, covariance_audit, sample, sample_batch
from .free_moments import FreeSystemSpec, free_norm, poly_moment, power_moments, word_moment
from .linalg import hermitian_eig, hermitian_eigvals, operator_norm, partial_trace_right
from .ncpoly import CircularModel, NcPoly, evaluate, model_matrix, parse_poly, scalar_model, x
from .rng import RngStream
from .testfunctions import TestFunction

__all__ = [
    "CircularModel",
    "CorrectionDistribution",
    "DensityProfile",
    "DirectionalSolver",
    "EnsembleSpec",
    "FreeSystemSpec",
    "L_of",
    "NcPoly",
    "R_of",
    "RngStream",
    "TestFunction",
    "closed_form_lambda",
    "correction_chain",
    "correction_lambda",
    "covariance_audit",
    "density_and_support",
    "ensemble_model",
    "evaluate",
    "free_norm",
    "hermitian_eig",
    "hermitian_eigvals",
    "l_of",
    "model_matrix",
    "operator_norm",
    "parse_poly",
    "partial_trace_right",
    "poly_moment",
    "power_moments",
    "sample",
    "sample_batch",
    "scalar_model",
    "solve_G",
    "solve_G_batch",
    "solve_G_directional",
    "word_moment",
    "x",
]
