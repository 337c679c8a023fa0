"""Frozen reference values.

Each value is derived independently of the package code (hand calculation,
entry-variance bookkeeping or a classical formula) and is never recomputed
by the code under test.
"""

import math

# Catalan numbers: tau(x^{2k}) for a standard semicircular x
CATALAN = (1, 1, 2, 5, 14, 42, 132, 429)

# scalar semicircular model at lambda = 5/2: G = (z - sqrt(z^2 - 4))/2 = 1/2,
# G' = (1 - z/sqrt(z^2-4))/2 = -1/3
SEMI_G_25 = 0.5
SEMI_GPRIME_25 = -1.0 / 3.0

# correction chain at lambda = 5/2
GOE_R_25 = 1.0 / 3.0
GOE_L_25 = 2.0 / 9.0
GOESTAR_R_25 = -0.2
GOESTAR_L_25 = -2.0 / 15.0
GSE_R_25 = -1.0 / 6.0  # times the 2x2 identity
GSE_l_25 = -1.0 / 9.0

# G(i) for the semicircle: (i - i sqrt 5)/2
SEMI_G_I = complex(0.0, (1 - math.sqrt(5)) / 2)

# exact E tr X^2 for X in kind(n, 1/n) from the entry variances
SECOND_MOMENT = {
    "goe": lambda n: 1 + 1 / n,
    "goe_star": lambda n: 1 - 1 / n,
    "gse": lambda n: 1 - 1 / (2 * n),
    "gse_star": lambda n: 1 + 1 / (2 * n),
}

# Lambda(x^2), Lambda(x^4) of the closed forms; nu_2 moments are 2 and 6
LAMBDA_X2 = {"goe": 1.0, "goe_star": -1.0, "gse": -0.5, "gse_star": 0.5}
LAMBDA_X4 = {"goe": 5.0, "goe_star": -3.0, "gse": -2.5, "gse_star": 1.5}

# exact GOE(n, 1/n) fourth moment: E tr X^4 = 2 + 5/n + 5/n^2
GOE_FOURTH = lambda n: 2 + 5 / n + 5 / n ** 2  # noqa: E731

# norm of the square of a circular element: sqrt(27/4)
CIRCULAR_SQUARE_NORM = math.sqrt(27 / 4)

# semicircle density at 0
SEMI_DENSITY_0 = 1 / math.pi

# support of a0 = diag(3, -3) plus a semicircular of unit variance
TWO_INTERVAL_SUPPORT = ((-5.0, -1.0), (1.0, 5.0))
