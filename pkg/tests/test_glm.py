import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.special import expit, logit

from oracles import grid_search_mle
from posim.glm import GlmError, SingularDesignError, dependent_columns, fit_weighted_logistic


def test_intercept_only_balanced():
    y = np.array([0, 1] * 10)
    fit = fit_weighted_logistic(np.ones((20, 1)), y)
    assert fit.converged
    assert fit.coefficients[0] == pytest.approx(0.0, abs=1e-12)


def test_intercept_only_quarter():
    y = np.array([1, 0, 0, 0] * 5)
    fit = fit_weighted_logistic(np.ones((20, 1)), y)
    assert fit.coefficients[0] == pytest.approx(logit(0.25), abs=1e-10)
    assert fit.max_abs_score <= 1e-8


def test_eight_rows_against_grid_search():
    x = np.array([0, 0, 0, 0, 1, 1, 1, 1.0])
    y = np.array([0, 0, 1, 0, 1, 1, 0, 1.0])
    w = np.array([1, 2, 1, 0.5, 1, 1, 3, 1.0])
    X = np.column_stack([np.ones(8), x])
    fit = fit_weighted_logistic(X, y, w)
    oracle = grid_search_mle(X, y, w)
    assert np.max(np.abs(fit.coefficients - oracle)) <= 1e-4


def test_score_equations_hold():
    rng = np.random.default_rng(0)
    X = np.column_stack([np.ones(300), rng.normal(size=(300, 2))])
    y = (rng.uniform(size=300) < expit(X @ [0.3, 1.0, -0.5])).astype(float)
    w = rng.uniform(0.2, 3.0, size=300)
    fit = fit_weighted_logistic(X, y, w)
    assert fit.converged and not fit.separation_flag
    p = fit.predict(X)
    assert np.max(np.abs(X.T @ (w * (y - p)))) <= 1e-6


def test_separation_is_flagged_not_fatal():
    x = np.arange(10.0)
    y = (x >= 5).astype(float)
    fit = fit_weighted_logistic(np.column_stack([np.ones(10), x]), y)
    assert fit.separation_flag
    assert np.all(np.isfinite(fit.coefficients))


def test_collinear_columns_reported():
    x = np.arange(10.0)
    X = np.column_stack([np.ones(10), x, 2 * x + 1])
    y = np.array([0, 1] * 5)
    with pytest.raises(SingularDesignError) as info:
        fit_weighted_logistic(X, y)
    assert info.value.columns == [2]
    assert dependent_columns(X) == [2]


def test_zero_weight_rows_can_make_design_singular():
    X = np.column_stack([np.ones(6), [0, 0, 0, 1, 1, 1.0]])
    w = np.array([1, 1, 1, 0, 0, 0.0])
    with pytest.raises(SingularDesignError):
        fit_weighted_logistic(X, np.array([0, 1, 0, 1, 0, 1]), w)


@pytest.mark.parametrize(
    "X, y, w",
    [
        (np.zeros((0, 1)), np.zeros(0), None),
        (np.ones((3, 1)), np.ones(2), None),
        (np.ones((3, 1)), np.ones(3), np.zeros(3)),
        (np.ones((3, 1)), np.ones(3), np.array([1, -1, 1.0])),
        (np.ones((1, 2)), np.ones(1), None),
    ],
)
def test_invalid_inputs(X, y, w):
    with pytest.raises(GlmError):
        fit_weighted_logistic(X, y, w)


def _data(seed, n=40):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = (rng.uniform(size=n) < expit(0.2 + 0.7 * X[:, 1])).astype(float)
    w = rng.uniform(0.1, 5.0, size=n)
    return X, y, w


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(1e-3, 1e3))
def test_weight_scaling_invariance(seed, c):
    X, y, w = _data(seed)
    a = fit_weighted_logistic(X, y, w)
    assume(a.converged and not a.separation_flag)
    b = fit_weighted_logistic(X, y, c * w)
    assert np.max(np.abs(a.coefficients - b.coefficients)) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), row=st.integers(0, 39))
def test_duplicate_row_equals_double_weight(seed, row):
    X, y, _ = _data(seed)
    w = np.ones(len(y))
    w2 = w.copy()
    w2[row] = 2.0
    a = fit_weighted_logistic(X, y, w2)
    assume(a.converged and not a.separation_flag)
    b = fit_weighted_logistic(np.vstack([X, X[row]]), np.append(y, y[row]))
    assert np.max(np.abs(a.coefficients - b.coefficients)) <= 1e-10
