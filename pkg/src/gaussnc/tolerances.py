"""Numerical tolerances shared by every module."""

# Hermitian eigendecomposition: reconstruction and orthonormality
EIG_RECONSTRUCTION = 1e-10
# LU pivot floor relative to the matrix norm
PIVOT_FLOOR = 1e-14
# self-adjointness check relative to max(1, max|A|)
SELF_ADJOINT = 1e-12
# fixed-point residual relative to max(1, ||lambda||)
DYSON_RESIDUAL = 1e-12
DYSON_MAX_ITER = 100_000
# fixed-point -> Newton hand-off
NEWTON_SWITCH = 1e-5
# directional-derivative solve: condition number above which the
# geometric-series fallback is tried
DIRECTIONAL_COND = 1e10
# density below this value declares a spectral gap
SUPPORT_THRESHOLD = 1e-3
# imaginary part used to read boundary values when refining support edges
EDGE_ETA = 1e-9
# default Stieltjes smoothing schedule
ETA_SCHEDULE = (0.1, 0.05, 0.025)
# schedule for moment integrals of degree up to 8 at absolute accuracy 1e-3
FINE_ETA_SCHEDULE = (0.1, 0.05, 0.025, 0.0125, 0.00625)
# longest word accepted by the pairing recursion
WORD_LENGTH_CAP = 64
# aggregated-word budget for (p*p)^k expansions
MONOMIAL_BUDGET = 10_000_000
