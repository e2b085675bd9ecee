import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batchbnb.losses import (LossKind, check_labels, loss_conjugate, loss_derivative, loss_value,
                             smoothness_constant, spectral_norm)

finite = st.floats(-50, 50, allow_nan=False)
label = st.sampled_from([-1.0, 1.0])


def test_squared_values():
    assert loss_value("squared", 3.0, 3.0) == 0.0
    assert loss_derivative("squared", 1.0, 1.0) == 0.0
    assert loss_conjugate("squared", 0.0, 5.0) == 0.0


def test_logistic_values():
    assert loss_value("logistic", 0.0, 1.0) == pytest.approx(math.log(2), abs=1e-15)
    # log(1 + e^2) written out
    assert loss_value("logistic", 2.0, -1.0) == pytest.approx(2.1269280110429727, abs=1e-14)
    assert loss_derivative("logistic", 0.0, 1.0) == -0.5
    assert loss_derivative("logistic", 1.0, 1.0) == pytest.approx(-0.2689414213699951, abs=1e-15)


def test_logistic_conjugate_domain():
    assert loss_conjugate("logistic", -0.5, 1.0) == pytest.approx(-math.log(2), abs=1e-15)
    assert loss_conjugate("logistic", 0.1, 1.0) == math.inf
    assert loss_conjugate("logistic", -1.0, 1.0) == 0.0
    assert loss_conjugate("logistic", 0.0, -1.0) == 0.0
    assert loss_conjugate("logistic", -1.0 - 1e-12, 1.0) == math.inf


def test_logistic_conjugate_is_the_sup():
    # numeric sup over s of zeta*s - l(s) on a fine grid
    s = np.linspace(-40, 40, 400001)
    for a in (0.1, 0.37, 0.5, 0.9):
        zeta = -a
        numeric = np.max(zeta * s - np.logaddexp(0.0, -s))
        assert loss_conjugate("logistic", zeta, 1.0) == pytest.approx(numeric, abs=1e-7)


def test_logistic_no_overflow():
    for s in (1e4, -1e4):
        for y in (1.0, -1.0):
            assert np.isfinite(loss_value("logistic", s, y))
            assert np.isfinite(loss_derivative("logistic", s, y))


def test_bad_labels_rejected():
    with pytest.raises(ValueError, match="labels"):
        loss_value("logistic", 0.0, 0.0)
    with pytest.raises(ValueError, match="labels"):
        check_labels([1, -1, 2])
    with pytest.raises(ValueError):
        LossKind.parse("poisson")


def test_vectorised_shapes():
    s = np.zeros((3, 2))
    y = np.array([1.0, -1.0, 1.0])[:, None]
    assert loss_value("logistic", s, y).shape == (3, 2)
    assert loss_derivative("squared", s, y).shape == (3, 2)


@settings(max_examples=300, deadline=None)
@given(s=finite, y=label, kind=st.sampled_from(["squared", "logistic"]))
def test_derivative_matches_finite_difference(s, y, kind):
    h = 1e-5 * max(1.0, abs(s))
    fd = (loss_value(kind, s + h, y) - loss_value(kind, s - h, y)) / (2 * h)
    d = loss_derivative(kind, s, y)
    assert abs(fd - d) <= 1e-6 * max(1.0, abs(d))


@settings(max_examples=300, deadline=None)
@given(s=finite, y=label, kind=st.sampled_from(["squared", "logistic"]))
def test_fenchel_young_equality(s, y, kind):
    zeta = loss_derivative(kind, s, y)
    gap = loss_value(kind, s, y) + loss_conjugate(kind, zeta, y) - zeta * s
    assert abs(gap) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(s=finite, y=label, zeta=st.floats(-1, 1))
def test_fenchel_young_inequality(s, y, zeta):
    # l(s) + l*(zeta) >= zeta * s for every pair
    for kind in ("squared", "logistic"):
        lhs = loss_value(kind, s, y) + loss_conjugate(kind, zeta, y)
        assert lhs >= zeta * s - 1e-9


def test_smoothness_constant():
    assert smoothness_constant("squared", np.eye(2)) == pytest.approx(1.01, rel=1e-12)
    assert smoothness_constant("logistic", np.array([[3.0]])) == pytest.approx(1.01 * 9 / 4, rel=1e-12)
    assert smoothness_constant("squared", np.zeros((3, 2))) == 1e-12
    rng = np.random.default_rng(0)
    X = rng.normal(size=(10, 5))
    dense = np.linalg.svd(X, compute_uv=False)[0] ** 2
    assert smoothness_constant("squared", X) == pytest.approx(1.01 * dense, rel=0.01)
    assert smoothness_constant("squared", X) >= dense
    with pytest.raises(ValueError):
        smoothness_constant("squared", np.zeros((0, 3)))


def test_spectral_norm_deterministic():
    X = np.random.default_rng(3).normal(size=(20, 7))
    assert spectral_norm(X) == spectral_norm(X)
