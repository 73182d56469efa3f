"""Parametric power models: OLS, scaled-sigmoid regressions and LASSO.

The sigmoid models follow the sign convention

    y_hat = C / (1 + exp(eta)),

so an increasing power curve has a negative wind-speed coefficient. For the
polynomial variant the wind speed enters ``eta`` through a cubic.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import expit

from .pipeline import FEATURES, FeatureSet, compute_stats, select_features

SIGMOID_MAX_ITER = 500
SIGMOID_RTOL = 1e-10
SIGMOID_GTOL = 1e-8
LASSO_TOL = 1e-7
LASSO_MAX_SWEEPS = 100_000


class RankDeficientError(np.linalg.LinAlgError):
    """The design matrix does not have full column rank."""


class SigmoidVariant(str, enum.Enum):
    LOGISTIC = "logistic"
    POLYNOMIAL_LOGISTIC = "polylogistic"


@dataclass(frozen=True)
class FitReport:
    objective: float
    iterations: int
    converged: bool
    gradient_norm: float
    # which stopping rule fired: "gradient", "objective" or "" when not converged
    criterion: str = ""

    def to_dict(self) -> dict:
        return dict(objective=self.objective, iterations=self.iterations, converged=self.converged,
                    gradient_norm=self.gradient_norm, criterion=self.criterion)


@dataclass(frozen=True)
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    feature_set: FeatureSet
    lambda_: float | None = None

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float).ravel()
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "feature_set", FeatureSet(self.feature_set))
        if coef.size != self.feature_set.n_features:
            raise ValueError(f"{coef.size} coefficients for feature set {self.feature_set.value!r}")

    def predict(self, X) -> np.ndarray:
        X = _checked_input(X, self.feature_set)
        return self.intercept + X @ self.coefficients

    def to_dict(self) -> dict:
        d = {
            "version": 1,
            "kind": "lasso" if self.lambda_ is not None else "linear",
            "feature_set": self.feature_set.value,
            "params": [float(self.intercept), *map(float, self.coefficients)],
        }
        if self.lambda_ is not None:
            d["lambda"] = float(self.lambda_)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        p = d["params"]
        return cls(p[0], np.array(p[1:], dtype=float), FeatureSet(d["feature_set"]), d.get("lambda"))


@dataclass(frozen=True)
class SigmoidModel:
    """Scaled sigmoid ``amplitude / (1 + exp(eta))``.

    ``coef`` holds the coefficients of ``eta`` over :func:`sigmoid_design`:
    intercept, then wind speed (``w, w**2, w**3`` for the polynomial variant),
    then the remaining features in :data:`~windpower.pipeline.FEATURES` order.
    """

    amplitude: float
    coef: np.ndarray
    variant: SigmoidVariant
    feature_set: FeatureSet
    report: FitReport | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "coef", np.asarray(self.coef, dtype=float).ravel())
        object.__setattr__(self, "variant", SigmoidVariant(self.variant))
        object.__setattr__(self, "feature_set", FeatureSet(self.feature_set))
        if not self.amplitude > 0:
            raise ValueError("sigmoid amplitude must be positive")
        if self.coef.size != _n_eta_terms(self.variant, self.feature_set):
            raise ValueError("coefficient count does not match variant and feature set")

    @property
    def linear_coeffs(self) -> np.ndarray:
        """Intercept and the coefficients entering ``eta`` linearly."""
        if self.variant is SigmoidVariant.LOGISTIC:
            return self.coef
        return np.concatenate([self.coef[:1], self.coef[4:]])

    @property
    def poly_coeffs(self) -> np.ndarray | None:
        """Wind-speed cubic ``(a_1, a_2, a_3)``; ``None`` for the plain logistic."""
        if self.variant is SigmoidVariant.LOGISTIC:
            return None
        return self.coef[1:4]

    def predict(self, X) -> np.ndarray:
        X = _checked_input(X, self.feature_set)
        eta = sigmoid_design(X, self.variant) @ self.coef
        return self.amplitude * expit(-eta)

    def to_dict(self) -> dict:
        d = {
            "version": 1,
            "kind": self.variant.value,
            "feature_set": self.feature_set.value,
            "params": [float(self.amplitude), *map(float, self.coef)],
        }
        if self.report is not None:
            d["fit_report"] = self.report.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SigmoidModel":
        p = d["params"]
        report = FitReport(**d["fit_report"]) if "fit_report" in d else None
        return cls(p[0], np.array(p[1:], dtype=float), SigmoidVariant(d["kind"]), FeatureSet(d["feature_set"]), report)


def _checked_input(X, feature_set: FeatureSet) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != feature_set.n_features:
        raise ValueError(
            f"model expects feature set {feature_set.value!r} ({feature_set.n_features} columns), got {X.shape[1]}"
        )
    return X


def predict(model, X) -> np.ndarray:
    """Evaluate a fitted parametric model on rows of its feature set."""
    return model.predict(X)


# --------------------------------------------------------------------------
# OLS


def fit_ols(X, y, feature_set: FeatureSet | str = FeatureSet.ALL) -> LinearModel:
    """Ordinary least squares with an intercept.

    Raises :class:`RankDeficientError` naming the linearly dependent columns.
    """
    fs = FeatureSet(feature_set)
    X = select_features(X, fs)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < p + 1:
        raise ValueError(f"need at least {p + 1} rows, got {n}")
    A = np.column_stack([np.ones(n), X])
    _check_rank(A, ["intercept", *FEATURES[:p]])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return LinearModel(float(coef[0]), coef[1:], fs)


def _check_rank(A: np.ndarray, names: list[str]) -> None:
    _, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(A.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < A.shape[1]:
        dependent = [names[j] for j in sorted(piv[rank:])]
        raise RankDeficientError(f"design matrix is rank deficient; dependent column(s): {', '.join(dependent)}")


# --------------------------------------------------------------------------
# sigmoid regressions


def _n_eta_terms(variant: SigmoidVariant, feature_set: FeatureSet) -> int:
    extra = 2 if variant is SigmoidVariant.POLYNOMIAL_LOGISTIC else 0
    return 1 + feature_set.n_features + extra


def sigmoid_design(X, variant: SigmoidVariant | str) -> np.ndarray:
    """Columns of ``eta``: 1, w (and w**2, w**3 for the polynomial variant), other features."""
    X = np.asarray(X, dtype=float)
    ones = np.ones((X.shape[0], 1))
    if SigmoidVariant(variant) is SigmoidVariant.LOGISTIC:
        return np.hstack([ones, X])
    w = X[:, :1]
    return np.hstack([ones, w, w**2, w**3, X[:, 1:]])


def sigmoid_objective(theta, D, y) -> float:
    """Sum of squared residuals; ``theta = (C, eta coefficients...)``."""
    theta = np.asarray(theta, dtype=float)
    r = y - theta[0] * expit(-(D @ theta[1:]))
    return float(r @ r)


def _residual_jacobian(theta, D, y):
    eta = D @ theta[1:]
    s = expit(-eta)
    r = y - theta[0] * s
    # d y_hat / d eta = -C s (1 - s)
    deta = -theta[0] * s * expit(eta)
    J = np.empty((D.shape[0], theta.size))
    J[:, 0] = s
    J[:, 1:] = deta[:, None] * D
    return r, J


def sigmoid_gradient(theta, D, y) -> np.ndarray:
    """Analytic gradient of :func:`sigmoid_objective`."""
    r, J = _residual_jacobian(np.asarray(theta, dtype=float), D, y)
    return -2.0 * (J.T @ r)


def sigmoid_initial_guess(D, y, variant: SigmoidVariant | str) -> np.ndarray:
    """Deterministic start: ``C = 1.05 max(y)``, eta terms from OLS on the logit.

    Targets are clipped to ``[0.01 C, 0.99 C]`` before the logit; the
    quadratic and cubic wind terms start at zero.
    """
    variant = SigmoidVariant(variant)
    C0 = 1.05 * float(np.max(y))
    frac = np.clip(y / C0, 0.01, 0.99)
    z = np.log((1.0 - frac) / frac)
    if variant is SigmoidVariant.LOGISTIC:
        lin = D
    else:
        lin = np.delete(D, [2, 3], axis=1)
    b, *_ = np.linalg.lstsq(lin, z, rcond=None)
    if variant is SigmoidVariant.POLYNOMIAL_LOGISTIC:
        b = np.concatenate([b[:2], [0.0, 0.0], b[2:]])
    return np.concatenate([[C0], b])


def fit_sigmoid(
    X,
    y,
    variant: SigmoidVariant | str = SigmoidVariant.LOGISTIC,
    feature_set: FeatureSet | str = FeatureSet.WIND_ONLY,
    max_iter: int = SIGMOID_MAX_ITER,
    theta0=None,
) -> tuple[SigmoidModel, FitReport]:
    """Least-squares fit of a scaled sigmoid by Levenberg-Marquardt.

    Steps solve ``min |J d - r|^2 + mu |diag(|J_k|) d|^2``; the damping
    ``mu`` shrinks after accepted steps and grows after rejected ones.
    Convergence is declared when an accepted step lowers the objective by
    less than 1e-10 relative, or the gradient norm drops below 1e-8.
    A fit that exhausts ``max_iter`` is returned with ``converged=False``.
    """
    variant = SigmoidVariant(variant)
    fs = FeatureSet(feature_set)
    X = select_features(X, fs)
    y = np.asarray(y, dtype=float)
    D = sigmoid_design(X, variant)
    n_params = D.shape[1] + 1
    if len(y) < n_params + 1:
        raise ValueError(f"need at least {n_params + 1} rows, got {len(y)}")
    if not np.max(y) > 0:
        raise ValueError("sigmoid fit needs a positive maximum target")

    theta = sigmoid_initial_guess(D, y, variant) if theta0 is None else np.array(theta0, dtype=float)
    r, J = _residual_jacobian(theta, D, y)
    F = float(r @ r)
    mu = 1e-3
    criterion = ""
    it = 0
    for it in range(1, max_iter + 1):
        g = -2.0 * (J.T @ r)
        if np.linalg.norm(g) < SIGMOID_GTOL:
            criterion = "gradient"
            break
        scale = np.linalg.norm(J, axis=0)
        scale[scale == 0] = 1.0
        accepted = False
        while mu < 1e20:
            A = np.vstack([J, math.sqrt(mu) * np.diag(scale)])
            b = np.concatenate([r, np.zeros(n_params)])
            step, *_ = np.linalg.lstsq(A, b, rcond=None)
            cand = theta + step
            if cand[0] <= 0:
                mu *= 4.0
                continue
            r_new, J_new = _residual_jacobian(cand, D, y)
            F_new = float(r_new @ r_new)
            if F_new < F:
                accepted = True
                break
            mu *= 4.0
        if not accepted:
            # no descent step exists at machine precision
            if np.linalg.norm(g) < SIGMOID_GTOL:
                criterion = "gradient"
            break
        decrease = (F - F_new) / F
        theta, r, J, F = cand, r_new, J_new, F_new
        mu = max(mu / 3.0, 1e-12)
        if decrease < SIGMOID_RTOL:
            criterion = "objective"
            break
    gnorm = float(np.linalg.norm(-2.0 * (J.T @ r)))
    if criterion == "" and gnorm < SIGMOID_GTOL:
        criterion = "gradient"
    report = FitReport(F, it, criterion != "", gnorm, criterion)
    model = SigmoidModel(float(theta[0]), theta[1:], variant, fs, report)
    return model, report


# --------------------------------------------------------------------------
# LASSO


def _soft_threshold(z: float, lam: float) -> float:
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


def _lasso_cd(G: np.ndarray, c: np.ndarray, lam: float, beta: np.ndarray) -> np.ndarray:
    """Coordinate descent on ``0.5 b'Gb - c'b + lam |b|_1`` (covariance form)."""
    beta = beta.copy()
    p = beta.size
    Gb = G @ beta
    for _ in range(LASSO_MAX_SWEEPS):
        max_change = 0.0
        for j in range(p):
            old = beta[j]
            rho = c[j] - Gb[j] + G[j, j] * old
            new = _soft_threshold(rho, lam) / G[j, j]
            if new != old:
                Gb += G[:, j] * (new - old)
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        if max_change < LASSO_TOL:
            break
    return beta


@dataclass
class _Standardized:
    Z: np.ndarray
    yc: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float

    @classmethod
    def of(cls, X, y):
        stats = compute_stats(X)
        return cls(stats.apply(X), y - y.mean(), stats.mean, stats.std, float(y.mean()))

    def to_original(self, beta):
        coef = beta / self.x_std
        return self.y_mean - coef @ self.x_mean, coef


def lambda_max(X, y) -> float:
    """Smallest penalty at which every standardized slope is zero."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    s = _Standardized.of(X, np.asarray(y, dtype=float))
    return float(np.max(np.abs(s.Z.T @ s.yc)))


def lasso_path(X, y, lambdas) -> np.ndarray:
    """Standardized-scale coefficients along ``lambdas`` (one row per value).

    Solves ``0.5 |yc - Z b|^2 + lam |b|_1`` with warm starts, where ``Z`` is
    the column-standardized design (``ddof=1``) and ``yc`` the centered target.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    s = _Standardized.of(X, np.asarray(y, dtype=float))
    G = s.Z.T @ s.Z
    c = s.Z.T @ s.yc
    beta = np.zeros(X.shape[1])
    out = np.empty((len(lambdas), X.shape[1]))
    for i, lam in enumerate(lambdas):
        beta = _lasso_cd(G, c, float(lam), beta)
        out[i] = beta
    return out


def default_lambda_grid(X, y, n: int = 50, ratio: float = 1e-4) -> np.ndarray:
    lmax = lambda_max(X, y)
    return np.geomspace(lmax, ratio * lmax, n)


def fit_lasso(
    X,
    y,
    feature_set: FeatureSet | str = FeatureSet.ALL,
    lambda_grid=None,
    cv_folds: int = 5,
) -> LinearModel:
    """LASSO with the penalty chosen by contiguous K-fold cross-validation.

    Features are standardized internally and the returned coefficients are in
    original units; the intercept is not penalized. Fold fits use the penalty
    rescaled by ``n_fold_train / n`` so that it keeps the same per-row weight.
    """
    if cv_folds < 2:
        raise ValueError("cv_folds must be at least 2")
    fs = FeatureSet(feature_set)
    X = select_features(X, fs)
    y = np.asarray(y, dtype=float)
    n = len(y)
    grid = default_lambda_grid(X, y) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty lambda grid")
    if np.any(np.diff(grid) > 0):
        raise ValueError("lambda grid must be descending")

    if grid.size == 1:
        best = float(grid[0])
    else:
        folds = np.array_split(np.arange(n), cv_folds)
        err = np.zeros(grid.size)
        for idx in folds:
            train = np.ones(n, dtype=bool)
            train[idx] = False
            s = _Standardized.of(X[train], y[train])
            G, c = s.Z.T @ s.Z, s.Z.T @ s.yc
            beta = np.zeros(X.shape[1])
            frac = train.sum() / n
            for i, lam in enumerate(grid):
                beta = _lasso_cd(G, c, lam * frac, beta)
                b0, coef = s.to_original(beta)
                resid = y[idx] - (b0 + X[idx] @ coef)
                err[i] += math.sqrt(np.mean(resid**2))
        best = float(grid[int(np.argmin(err))])

    s = _Standardized.of(X, y)
    beta = _lasso_cd(s.Z.T @ s.Z, s.Z.T @ s.yc, best, np.zeros(X.shape[1]))
    b0, coef = s.to_original(beta)
    return LinearModel(float(b0), coef, fs, best)
