import numpy as np
import pytest

from gaussnc.ensembles import EnsembleSpec, sample_batch
from gaussnc.finite_n import exact_second_moment, goe_expected_trace, goe_one_point_density
from gaussnc.rng import RngStream
from oracles import GOE_FOURTH, SECOND_MOMENT


@pytest.mark.parametrize("kind", sorted(SECOND_MOMENT))
@pytest.mark.parametrize("n", [1, 50, 200])
def test_second_moment_table(kind, n):
    assert exact_second_moment(kind, n) == pytest.approx(SECOND_MOMENT[kind](n), abs=1e-15)


def test_unknown_kind():
    with pytest.raises(ValueError):
        exact_second_moment("grm", 3)
    with pytest.raises(ValueError):
        goe_one_point_density(0.0, 0)


@pytest.mark.parametrize("n", [1, 2, 5, 10, 31])
def test_goe_density_moments(n):
    one = goe_expected_trace(lambda x: np.ones_like(x), n)
    assert one == pytest.approx(1.0, abs=1e-5)
    assert goe_expected_trace(lambda x: x ** 2, n) == pytest.approx(1 + 1 / n, abs=1e-5)
    assert goe_expected_trace(lambda x: x ** 4, n) == pytest.approx(GOE_FOURTH(n), abs=1e-4)
    assert goe_expected_trace(lambda x: x ** 3, n) == pytest.approx(0.0, abs=1e-8)


def test_goe_density_n1_is_gaussian():
    # GOE(1, 1) has the single entry N(0, 2)
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(goe_one_point_density(x, 1), np.exp(-x ** 2 / 4) / np.sqrt(4 * np.pi), atol=1e-6)


def test_goe_density_against_sampling():
    n, reps = 10, 4000
    x = sample_batch(EnsembleSpec.normalized("goe", n), RngStream(8), reps)
    ev = np.linalg.eigvalsh(x)
    vals = np.mean(ev > 1.5, axis=1)
    z = (vals.mean() - goe_expected_trace(lambda t: (t > 1.5).astype(float), n, nodes=20001)) / (
        vals.std(ddof=1) / np.sqrt(reps))
    assert abs(z) < 5


def test_goe_gap_mass_decays():
    vals = [goe_expected_trace(lambda t: (t > 2.5).astype(float), n, support=(2.5, 6.0)) for n in (10, 40)]
    assert 0 < vals[1] < vals[0] * 1e-3
