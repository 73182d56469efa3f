import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windpower.parametric import (LinearModel, RankDeficientError, SigmoidModel, SigmoidVariant, fit_lasso, fit_ols,
                                  fit_sigmoid, lambda_max, lasso_path, predict, sigmoid_design, sigmoid_gradient,
                                  sigmoid_objective)
from windpower.pipeline import FeatureSet

LOGISTIC = SigmoidVariant.LOGISTIC
POLY = SigmoidVariant.POLYNOMIAL_LOGISTIC


def normal_equations(X, y):
    A = np.column_stack([np.ones(len(y)), X])
    return np.linalg.solve(A.T @ A, A.T @ y)


# --------------------------------------------------------------------------
# OLS


def test_ols_exact_line():
    w = np.linspace(0, 10, 11)
    m = fit_ols(w[:, None], 2 * w + 1, FeatureSet.WIND_ONLY)
    assert m.intercept == pytest.approx(1, abs=1e-10)
    assert m.coefficients[0] == pytest.approx(2, abs=1e-10)


def test_ols_constant_targets(rng):
    X = rng.normal(size=(30, 7))
    m = fit_ols(X, np.full(30, 42.0))
    assert m.intercept == pytest.approx(42.0, abs=1e-10)
    assert np.allclose(m.coefficients, 0, atol=1e-10)


def test_ols_matches_normal_equations(rng):
    X = rng.normal(size=(50, 7))
    y = X @ rng.normal(size=7) + rng.normal(size=50)
    m = fit_ols(X, y)
    ref = normal_equations(X, y)
    assert np.allclose(np.r_[m.intercept, m.coefficients], ref, rtol=1e-8, atol=1e-8)


def test_ols_rank_deficiency_names_columns(rng):
    X = rng.normal(size=(20, 7))
    X[:, 4] = 2 * X[:, 0]
    with pytest.raises(RankDeficientError, match="w_var|w"):
        fit_ols(X, rng.normal(size=20))
    with pytest.raises(ValueError):
        fit_ols(rng.normal(size=(5, 7)), rng.normal(size=5))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3))
def test_ols_shift_and_orthogonality(seed, c):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 7))
    y = X @ rng.normal(size=7) + rng.normal(size=40)
    m1, m2 = fit_ols(X, y), fit_ols(X, y + c)
    assert m2.intercept - m1.intercept == pytest.approx(c, abs=1e-9)
    assert np.allclose(m1.coefficients, m2.coefficients, atol=1e-9)
    r = y - m1.predict(X)
    for col in np.column_stack([np.ones(40), X]).T:
        assert abs(col @ r) / (np.linalg.norm(col) * np.linalg.norm(y)) < 1e-8


# --------------------------------------------------------------------------
# predict


def test_predict_linear_direct():
    m = LinearModel(1.0, [2.0], FeatureSet.WIND_ONLY)
    assert predict(m, np.array([[3.0]]))[0] == 7.0


def test_predict_sigmoid_midpoint_and_tail():
    m = SigmoidModel(1000.0, [0.0, 0.0], LOGISTIC, FeatureSet.WIND_ONLY)
    assert predict(m, np.array([[5.0]]))[0] == pytest.approx(500.0)
    tail = SigmoidModel(1000.0, [800.0, 0.0], LOGISTIC, FeatureSet.WIND_ONLY)
    assert predict(tail, np.array([[5.0]]))[0] == pytest.approx(0.0, abs=1e-300)


def test_predict_feature_set_mismatch():
    m = LinearModel(1.0, [2.0], FeatureSet.WIND_ONLY)
    with pytest.raises(ValueError):
        predict(m, np.ones((2, 7)))


def test_predict_pure(rng):
    X = rng.normal(size=(10, 7))
    m = fit_ols(X, rng.normal(size=10))
    assert np.array_equal(predict(m, X), predict(m, X))


def test_sigmoid_prediction_in_open_interval(rng):
    m = SigmoidModel(2000.0, [6.0, -1.0, 0.01, -0.002], POLY, FeatureSet.WIND_ONLY)
    p = m.predict(rng.uniform(0, 15, (100, 1)))
    assert np.all((p > 0) & (p < 2000))


# --------------------------------------------------------------------------
# sigmoid fits


def test_logistic_recovers_parameters():
    w = np.linspace(0, 15, 200)[:, None]
    y = 1000 / (1 + np.exp(6 - w[:, 0]))
    m, rep = fit_sigmoid(w, y, LOGISTIC, FeatureSet.WIND_ONLY)
    assert rep.converged
    assert m.amplitude == pytest.approx(1000, rel=1e-4)
    assert m.coef == pytest.approx([6, -1], rel=1e-4)


def test_logistic_flat_targets():
    w = np.linspace(0, 15, 50)[:, None]
    m, _ = fit_sigmoid(w, np.full(50, 300.0), LOGISTIC, FeatureSet.WIND_ONLY)
    assert np.allclose(m.predict(w), 300.0, atol=1e-6)


def test_polylogistic_generate_and_refit():
    w = np.linspace(0, 15, 300)[:, None]
    true = SigmoidModel(2000.0, [7.0, -0.5, -0.08, 0.002], POLY, FeatureSet.WIND_ONLY)
    y = true.predict(w)
    m, rep = fit_sigmoid(w, y, POLY, FeatureSet.WIND_ONLY)
    assert rep.objective < 1e-6 * np.sum(y**2)
    assert m.poly_coeffs is not None and m.poly_coeffs.size == 3


def test_sigmoid_all_variables(rng):
    X = np.column_stack([rng.uniform(0, 15, 400), rng.normal(size=(400, 6))])
    true = SigmoidModel(1500.0, [6.0, -1.0, 0.1, 0.0, 0.05, 0.0, 0.0, -0.1], LOGISTIC, FeatureSet.ALL)
    m, rep = fit_sigmoid(X, true.predict(X), LOGISTIC, FeatureSet.ALL)
    assert rep.converged
    assert np.allclose(m.coef, true.coef, atol=1e-4)


def test_sigmoid_nonconvergence_flagged():
    w = np.linspace(0, 15, 100)[:, None]
    _, rep = fit_sigmoid(w, 1000 / (1 + np.exp(6 - w[:, 0])) + np.sin(w[:, 0]) * 30, LOGISTIC,
                         FeatureSet.WIND_ONLY, max_iter=1)
    assert not rep.converged and rep.iterations == 1


def test_sigmoid_report_consistency():
    w = np.linspace(0, 15, 100)[:, None]
    y = 1000 / (1 + np.exp(6 - w[:, 0])) + 20 * np.cos(3 * w[:, 0])
    _, rep = fit_sigmoid(w, y, POLY, FeatureSet.WIND_ONLY)
    assert rep.converged and rep.criterion in ("gradient", "objective")
    if rep.criterion == "gradient":
        assert rep.gradient_norm <= 1e-8


@pytest.mark.parametrize("variant, fs", [(LOGISTIC, "wind"), (POLY, "wind"), (LOGISTIC, "all"), (POLY, "all")])
def test_gradient_matches_finite_differences(variant, fs):
    rng = np.random.default_rng(7)
    p = 1 if fs == "wind" else 7
    X = np.column_stack([rng.uniform(0, 15, 60), rng.normal(size=(60, p - 1))])
    D = sigmoid_design(X, variant)
    y = rng.uniform(0, 2000, 60)
    for _ in range(10):
        theta = np.r_[rng.uniform(500, 2500), rng.normal(0, 0.3, D.shape[1]) / np.r_[1, D[:, 1:].std(axis=0)]]
        g = sigmoid_gradient(theta, D, y)
        h = 1e-6 * np.maximum(np.abs(theta), 1e-3)
        fd = np.array([(sigmoid_objective(theta + h[k] * e, D, y) - sigmoid_objective(theta - h[k] * e, D, y))
                       / (2 * h[k]) for k, e in enumerate(np.eye(theta.size))])
        assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-5


def test_sigmoid_errors():
    with pytest.raises(ValueError):
        fit_sigmoid(np.ones((3, 1)), np.ones(3), LOGISTIC, "wind")
    with pytest.raises(ValueError):
        fit_sigmoid(np.arange(10.0)[:, None], np.zeros(10), LOGISTIC, "wind")
    with pytest.raises(ValueError):
        SigmoidModel(-1.0, [0.0, 0.0], LOGISTIC, "wind")


# --------------------------------------------------------------------------
# LASSO


def test_lasso_zero_penalty_is_ols(rng):
    X = rng.normal(size=(80, 7))
    y = X @ rng.normal(size=7) + rng.normal(size=80)
    m = fit_lasso(X, y, lambda_grid=[0.0])
    ref = fit_ols(X, y)
    assert m.intercept == pytest.approx(ref.intercept, abs=1e-6)
    assert np.allclose(m.coefficients, ref.coefficients, atol=1e-6)


def test_lasso_annihilation(rng):
    X = rng.normal(size=(80, 7))
    y = X @ rng.normal(size=7) + rng.normal(size=80)
    lmax = lambda_max(X, y)
    for lam in (lmax, 2 * lmax):
        m = fit_lasso(X, y, lambda_grid=[lam])
        assert np.all(m.coefficients == 0.0)
        assert m.intercept == pytest.approx(y.mean())


def test_lasso_lambda_max_formula(rng):
    X = rng.normal(3, 2, size=(40, 3))
    y = rng.normal(size=40)
    Z = (X - X.mean(0)) / X.std(0, ddof=1)
    assert lambda_max(X, y) == pytest.approx(np.max(np.abs(Z.T @ (y - y.mean()))))
    just_below = lasso_path(X, y, [0.999 * lambda_max(X, y)])[0]
    assert np.count_nonzero(just_below) == 1


def _cd_oracle(Z, yc, lam, sweeps=20000):
    """Plain residual-form coordinate descent."""
    b = np.zeros(Z.shape[1])
    for _ in range(sweeps):
        for j in range(Z.shape[1]):
            r = yc - Z @ b + Z[:, j] * b[j]
            rho = Z[:, j] @ r
            b[j] = np.sign(rho) * max(abs(rho) - lam, 0) / (Z[:, j] @ Z[:, j])
    return b


def test_lasso_duplicated_feature_mass_shrinks(rng):
    x = rng.normal(size=30)
    X = np.column_stack([x, x])
    y = 3 * x + rng.normal(0, 0.1, 30)
    lmax = lambda_max(X, y)
    grid = lmax * np.array([0.8, 0.5, 0.2, 0.05])
    path = lasso_path(X, y, grid)
    Z = (X - X.mean(0)) / X.std(0, ddof=1)
    mass = []
    for lam, b in zip(grid, path):
        ref = _cd_oracle(Z, y - y.mean(), lam, sweeps=200)
        assert b.sum() == pytest.approx(ref.sum(), rel=1e-6)
        mass.append(np.abs(b).sum())
    # grid descends, so mass must grow along it
    assert all(m1 <= m2 + 1e-8 for m1, m2 in zip(mass, mass[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lasso_path_l1_monotone(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 5))
    X[:, 1] += 0.8 * X[:, 0]
    y = X @ rng.normal(size=5) + rng.normal(size=40)
    grid = np.geomspace(lambda_max(X, y), 1e-3, 25)
    l1 = np.abs(lasso_path(X, y, grid)).sum(axis=1)
    assert np.all(np.diff(l1) >= -1e-8)


def test_lasso_cv_selection_and_errors(rng):
    X = rng.normal(size=(200, 7))
    y = 5 * X[:, 0] + rng.normal(size=200)
    m = fit_lasso(X, y)
    assert m.lambda_ is not None and m.coefficients[0] == pytest.approx(5, rel=0.05)
    with pytest.raises(ValueError):
        fit_lasso(X, y, cv_folds=1)
    with pytest.raises(ValueError):
        fit_lasso(X, y, lambda_grid=[1.0, 2.0])


# --------------------------------------------------------------------------
# serialization


def test_model_json_round_trip(rng):
    X = np.column_stack([rng.uniform(0, 15, 100), rng.normal(size=(100, 6))])
    y = 1000 / (1 + np.exp(6 - X[:, 0])) + rng.normal(0, 5, 100)
    models = [fit_ols(X, y), fit_lasso(X, y, lambda_grid=[1.0]), fit_sigmoid(X, y, POLY, "all")[0],
              LinearModel(0.5, [0.25], "wind")]
    for m in models:
        d = json.loads(json.dumps(m.to_dict()))
        back = type(m).from_dict(d)
        assert np.array_equal(back.predict(X[:, :m.feature_set.n_features]),
                              m.predict(X[:, :m.feature_set.n_features]))
    assert LinearModel.from_dict(models[3].to_dict()).to_dict()["params"] == [0.5, 0.25]
    assert math.isfinite(models[2].to_dict()["fit_report"]["objective"])
