import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaussnc.ensembles import (
    KINDS,
    Q_J,
    Q_K,
    Q_L,
    EnsembleSpec,
    StructuralTypeError,
    compose_grmh,
    compose_grmr,
    covariance_audit,
    decompose_grmr,
    in_quaternion_image,
    quaternion_components,
    quaternion_embed,
    sample,
    sample_batch,
)
from gaussnc.finite_n import exact_second_moment
from gaussnc.rng import RngStream


def _draw(kind, n=6, seed=3):
    return sample(EnsembleSpec.normalized(kind, n), RngStream(seed))


def test_structural_images():
    x = _draw("goe")
    assert np.all(x.imag == 0) and np.array_equal(x, x.T)
    x = _draw("goe_star")
    assert np.all(x.real == 0) and np.array_equal(x, x.conj().T)
    assert np.all(np.diag(x) == 0)
    x = _draw("sgrm")
    assert np.allclose(x, x.conj().T, atol=0)
    x = _draw("grm_r")
    assert np.all(x.imag == 0)
    x = _draw("gse")
    assert x.shape == (12, 12)
    assert np.allclose(x, x.conj().T, atol=1e-15) and in_quaternion_image(x)
    x = _draw("gse_star")
    assert np.allclose(x, x.conj().T, atol=1e-15) and in_quaternion_image(1j * x)
    assert in_quaternion_image(_draw("grm_h"))


def test_gse_spectrum_is_doubled():
    w = np.linalg.eigvalsh(_draw("gse", n=8))
    np.testing.assert_allclose(w[0::2], w[1::2], atol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_sample_matches_batch(kind):
    spec = EnsembleSpec.normalized(kind, 5)
    batch = sample_batch(spec, RngStream(9), 4)
    s = RngStream(9)
    for b in batch:
        np.testing.assert_array_equal(b, sample(spec, s))


@pytest.mark.parametrize("kind", KINDS)
def test_covariance_audit(kind):
    report = covariance_audit(EnsembleSpec(kind, 6, 0.5), 4000, RngStream(17))
    assert report.max_abs_z < 5.5


def test_goe_diagonal_convention():
    report = covariance_audit(EnsembleSpec("goe", 4, 1.0, goe_diagonal="unit"), 4000, RngStream(2))
    assert report.row("goe", "diag_re").target_variance == 1.0
    assert report.max_abs_z < 5.5


@pytest.mark.parametrize("kind", ["goe", "goe_star", "gse", "gse_star", "sgrm"])
def test_exact_second_moment(kind):
    n, reps = 8, 4000
    spec = EnsembleSpec.normalized(kind, n)
    x = sample_batch(spec, RngStream(23), reps)
    vals = np.einsum("bij,bji->b", x, x).real / x.shape[-1]
    z = (vals.mean() - exact_second_moment(kind, n)) / (vals.std(ddof=1) / np.sqrt(reps))
    assert abs(z) < 5


def test_spec_validation():
    with pytest.raises(ValueError):
        EnsembleSpec("gue", 3, 1.0)
    with pytest.raises(ValueError):
        EnsembleSpec("goe", 0, 1.0)
    with pytest.raises(ValueError):
        EnsembleSpec("goe", 3, -1.0)
    with pytest.raises(ValueError):
        EnsembleSpec("goe", 3, 1.0, goe_diagonal="half")


def test_grmr_round_trip():
    y = sample(EnsembleSpec.normalized("grm_r", 7), RngStream(4))
    x1, x2 = decompose_grmr(y)
    assert np.allclose(x1.imag, 0) and np.allclose(x1, x1.T)
    np.testing.assert_allclose(compose_grmr(x1.real, x2), y, atol=1e-14)


def test_compose_rejects_wrong_types():
    goe = _draw("goe")
    goe_star = _draw("goe_star")
    with pytest.raises(StructuralTypeError):
        compose_grmr(goe_star, goe_star)
    with pytest.raises(StructuralTypeError):
        compose_grmr(goe, goe)
    with pytest.raises(StructuralTypeError):
        compose_grmr(goe, np.zeros((3, 3)))
    gse, gse_star = _draw("gse"), _draw("gse_star")
    out = compose_grmh(gse, gse_star)
    assert in_quaternion_image(out)
    with pytest.raises(StructuralTypeError):
        compose_grmh(gse_star, gse)
    with pytest.raises(StructuralTypeError):
        compose_grmh(goe, goe)


def test_grmh_composition_is_grmh_distributed():
    n, reps = 4, 3000
    a = sample_batch(EnsembleSpec.normalized("gse", n), RngStream(1), reps)
    b = sample_batch(EnsembleSpec.normalized("gse_star", n), RngStream(2), reps)
    y = (a + 1j * b) / np.sqrt(2)
    ref = sample_batch(EnsembleSpec.normalized("grm_h", n), RngStream(3), reps)
    for arr in (y, ref):
        comps = quaternion_components(arr)
        for c in comps:
            assert np.max(np.abs(c.imag)) < 1e-12
    stat = lambda arr: np.mean(np.abs(arr) ** 2) * 2 * n
    assert stat(y) == pytest.approx(stat(ref), rel=0.03)


@given(st.integers(0, 2**32 - 1))
def test_quaternion_trace_identity(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    lhs = x - Q_J @ x @ Q_J - Q_K @ x @ Q_K - Q_L @ x @ Q_L
    np.testing.assert_allclose(lhs, 2 * np.trace(x) * np.eye(2), atol=1e-12)


def test_quaternion_units_relations():
    one = np.eye(2)
    for u in (Q_J, Q_K, Q_L):
        np.testing.assert_allclose(u @ u, -one)
    np.testing.assert_allclose(Q_J @ Q_K, Q_L)


@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_quaternion_embed_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    parts = [rng.standard_normal((n, n)) for _ in range(4)]
    out = quaternion_components(quaternion_embed(parts))
    for p, q in zip(parts, out):
        np.testing.assert_allclose(q, p, atol=1e-13)
