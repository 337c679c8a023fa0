import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaussnc.correction import (
    CLOSED_FORM_KINDS,
    arcsine_expectation,
    closed_form_lambda,
    correction_lambda,
    ensemble_model,
)
from gaussnc.ensembles import EnsembleSpec, sample
from gaussnc.ncpoly import model_matrix
from gaussnc.rng import RngStream
from gaussnc.testfunctions import TestFunction
from oracles import LAMBDA_X2, LAMBDA_X4


@pytest.mark.parametrize("kind", CLOSED_FORM_KINDS)
def test_closed_form_values(kind):
    lam = closed_form_lambda(kind)
    assert lam.apply(TestFunction.monomial(2)) == pytest.approx(LAMBDA_X2[kind], abs=1e-12)
    assert lam.apply(TestFunction.monomial(4)) == pytest.approx(LAMBDA_X4[kind], abs=1e-12)
    assert lam.total_mass() == pytest.approx(0.0, abs=1e-12)


def test_arcsine_moments():
    assert arcsine_expectation(lambda x: x ** 2) == pytest.approx(2.0, abs=1e-12)
    assert arcsine_expectation(lambda x: x ** 4) == pytest.approx(6.0, abs=1e-12)


def test_numeric_matches_closed_form_goe():
    num = correction_lambda(kind="goe")
    ref = closed_form_lambda("goe")
    for phi in (TestFunction.monomial(2), TestFunction.bump(1.0, 0.8)):
        assert num.apply(phi) == pytest.approx(ref.apply(phi), abs=1e-3)
    assert num.total_mass() == pytest.approx(0.0, abs=1e-6)
    per_eta = num.apply_per_eta(TestFunction.monomial(2))
    assert per_eta.shape == (3,)


def test_mode_errors():
    with pytest.raises(ValueError):
        correction_lambda(mode="closed_form")
    with pytest.raises(ValueError):
        correction_lambda(mode="spectral", kind="goe")
    with pytest.raises(ValueError):
        correction_lambda()
    with pytest.raises(ValueError):
        closed_form_lambda("sgrm")
    with pytest.raises(ValueError):
        closed_form_lambda("goe").apply_per_eta(np.sin)


@pytest.mark.parametrize("kind", ["goe", "goe_star", "sgrm", "gse", "gse_star"])
def test_ensemble_model_reproduces_ensemble(kind):
    # S_n from GRM^R letters has the same second moment law as kind(n, 1/n)
    model = ensemble_model(kind)
    n = 5
    ys = [sample(EnsembleSpec.normalized("grm_r", n), RngStream(1, j)) for j in range(model.r)]
    s = model_matrix(model, ys)
    assert np.allclose(s, s.conj().T)
    assert s.shape == (model.m * n, model.m * n)


def test_write_csv(tmp_path):
    lam = closed_form_lambda("goe", grid=np.linspace(-3, 3, 7))
    dens, atoms = tmp_path / "lam.csv", tmp_path / "atoms.csv"
    lam.write_csv(dens, atoms)
    rows = list(csv.reader(dens.open()))
    assert rows[0] == ["x", "lambda_density", "eta_used", "support_flag"]
    assert len(rows) == 8
    arows = list(csv.reader(atoms.open()))
    assert arows[1:] == [["-2.0", "0.25"], ["2.0", "0.25"]]


@given(st.floats(-5, 5))
def test_test_function_derivatives(x0):
    h = 1e-6
    for phi in (TestFunction.monomial(3), TestFunction.bump(0.5, 1.5), TestFunction("smooth_sin", {"R": 2.0})):
        fd = (phi(np.array([x0 + h])) - phi(np.array([x0 - h])))[0] / (2 * h)
        assert phi.derivative(np.array([x0]))[0] == pytest.approx(fd, abs=1e-5)


def test_test_function_support_and_config():
    b = TestFunction.bump(3.0, 0.5)
    assert b.support == (2.5, 3.5)
    assert b(np.array([2.5, 3.0, 3.6])).tolist() == [0.0, 1.0, 0.0]
    assert TestFunction.from_config(b.to_config()) == b
    s = TestFunction("smooth_sin", {"R": 4.0, "width": 1.0})
    assert s(np.array([5.5]))[0] == 0.0
    assert s(np.array([1.0]))[0] == pytest.approx(np.sin(1.0))
    assert TestFunction.monomial(2).support is None
    with pytest.raises(ValueError):
        TestFunction("bump", {"center": 0.0, "radius": -1})
    with pytest.raises(ValueError):
        TestFunction("poly", {})
    with pytest.raises(ValueError):
        TestFunction("gauss")
    np.testing.assert_allclose(TestFunction.monomial(2).matrix_trace(np.array([[1.0, 3.0]])), [5.0])
