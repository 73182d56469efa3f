"""Benchmark protocol: per-turbine fits, farm sums, block RMSE reports.

Each turbine gets its own model; the farm prediction at an instant is the sum
of the turbine predictions. Test blocks are contiguous and later than the
training range.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import forest as _forest
from . import neighbors as _nb
from . import parametric as _pm
from . import tree as _tree
from .pipeline import FarmData, FeatureSet, select_features

log = logging.getLogger(__name__)

RATED_POWER_KW = 2050.0
VALIDATION_FRACTION = 0.2
SVR_EPSILON_FACTORS = (0.01, 0.03, 0.1, 0.3)


class InputMode:
    LOCAL = "local"
    VIRTUAL = "virtual"
    ALL = (LOCAL, VIRTUAL)


# --------------------------------------------------------------------------
# metrics and baselines


def rmse(predictions, observations) -> float:
    p = np.asarray(predictions, dtype=float)
    o = np.asarray(observations, dtype=float)
    if p.shape != o.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {o.shape}")
    if p.size == 0:
        raise ValueError("rmse of empty input")
    return math.sqrt(float(np.mean((p - o) ** 2)))


def pct_installed_power(mean_rmse: float, n_turbines: int, rated_per_turbine: float = RATED_POWER_KW) -> float:
    """RMSE as a percentage of the farm's installed power."""
    return 100.0 * mean_rmse / (n_turbines * rated_per_turbine)


def persistence_predict(series) -> np.ndarray:
    """Last observation as the prediction: ``out[t - 1] = series[t - 1]`` for instant ``t >= 1``."""
    series = np.asarray(series, dtype=float)
    if series.size < 2:
        raise ValueError("persistence needs at least 2 observations")
    return series[:-1].copy()


@dataclass(frozen=True)
class PowerCurve:
    speeds: np.ndarray
    powers: np.ndarray
    cut_in: float
    cut_out: float

    def __post_init__(self):
        s = np.asarray(self.speeds, dtype=float)
        p = np.asarray(self.powers, dtype=float)
        object.__setattr__(self, "speeds", s)
        object.__setattr__(self, "powers", p)
        if s.size < 2 or s.shape != p.shape:
            raise ValueError("power curve needs at least 2 knots of (speed, power)")
        if np.any(np.diff(s) <= 0):
            raise ValueError("knot speeds must be strictly increasing")
        if not self.cut_in < self.cut_out:
            raise ValueError("cut_in must be below cut_out")

    def predict(self, w) -> np.ndarray:
        return power_curve_predict(self, w)


def power_curve_predict(curve: PowerCurve, w):
    """Piecewise-linear knot interpolation, zero outside ``[cut_in, cut_out)``."""
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("wind speed must be non-negative")
    out = np.interp(w, curve.speeds, curve.powers)
    out = np.where((w >= curve.cut_in) & (w < curve.cut_out), out, 0.0)
    return float(out) if out.ndim == 0 else out


def load_power_curve(csv_path, json_path) -> PowerCurve:
    """Read ``wind_speed_ms,power_kw`` knots plus ``{"cut_in", "cut_out"}``."""
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    with open(json_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    speeds = [float(r["wind_speed_ms"]) for r in rows]
    powers = [float(r["power_kw"]) for r in rows]
    return PowerCurve(np.array(speeds), np.array(powers), float(meta["cut_in"]), float(meta["cut_out"]))


def save_power_curve(curve: PowerCurve, csv_path, json_path) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["wind_speed_ms", "power_kw"])
        for s, p in zip(curve.speeds, curve.powers):
            w.writerow([f"{s:.6f}", f"{p:.6f}"])
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump({"cut_in": curve.cut_in, "cut_out": curve.cut_out}, fh, indent=2)


# --------------------------------------------------------------------------
# methods


def turbine_seed(seed: int, turbine_index: int) -> int:
    """64-bit seed for one turbine's model, hashed from the run seed."""
    words = np.random.SeedSequence([int(seed), int(turbine_index)]).generate_state(2, np.uint32)
    return int(words[0]) << 32 | int(words[1])


@dataclass(frozen=True)
class FitContext:
    seed: int = 0
    power_curve: PowerCurve | None = None


def _split_validation(X, y):
    n_val = max(1, int(round(VALIDATION_FRACTION * len(y))))
    return X[:-n_val], y[:-n_val], X[-n_val:], y[-n_val:]


def _fit_linear(X, y, fs, ctx, **kw):
    return _pm.fit_ols(X, y, fs)


def _fit_logistic(X, y, fs, ctx, **kw):
    model, report = _pm.fit_sigmoid(X, y, _pm.SigmoidVariant.LOGISTIC, fs, **kw)
    if not report.converged:
        log.warning("logistic fit did not converge after %d iterations", report.iterations)
    return model


def _fit_polylogistic(X, y, fs, ctx, **kw):
    model, report = _pm.fit_sigmoid(X, y, _pm.SigmoidVariant.POLYNOMIAL_LOGISTIC, fs, **kw)
    if not report.converged:
        log.warning("polynomial logistic fit did not converge after %d iterations", report.iterations)
    return model


def _fit_lasso(X, y, fs, ctx, cv_folds=5, **kw):
    return _pm.fit_lasso(X, y, fs, cv_folds=cv_folds, **kw)


def _fit_cart(X, y, fs, ctx, min_node_size=5, prune=True, cv_folds=10, max_depth=None):
    params = _tree.TreeParams(min_node_size=min_node_size, max_depth=max_depth, prune=prune, cv_folds=cv_folds)
    return _tree.grow_tree(X, y, params)


def _fit_bagging(X, y, fs, ctx, b=_forest.DEFAULT_TREES, min_node_size=_forest.DEFAULT_MIN_NODE_SIZE, max_depth=None):
    return _forest.fit_bagging(X, y, b, ctx.seed, min_node_size, max_depth)


def _fit_rf(X, y, fs, ctx, b=_forest.DEFAULT_TREES, mtry=None, min_node_size=_forest.DEFAULT_MIN_NODE_SIZE,
            max_depth=None):
    return _forest.fit_forest(X, y, b, mtry, True, ctx.seed, min_node_size, max_depth)


def _fit_knn(X, y, fs, ctx, k=None, k_grid=_nb.DEFAULT_K_GRID):
    if k is None:
        Xt, yt, Xv, yv = _split_validation(X, y)
        k = _nb.select_k(Xt, yt, Xv, yv, [g for g in k_grid if g <= len(yt)])
    return _nb.fit_knn(X, y, k)


def _fit_svr(X, y, fs, ctx, epsilon=None, epsilon_factors=SVR_EPSILON_FACTORS, cost=None, gamma=None,
             max_rows=None):
    if max_rows is not None and len(y) > max_rows:
        # most recent rows, keeping the time order
        X, y = X[-max_rows:], y[-max_rows:]
    if epsilon is None:
        Xt, yt, Xv, yv = _split_validation(X, y)
        sd = float(np.std(yt, ddof=1))
        grid = [f * sd for f in epsilon_factors]
        epsilon = _nb.calibrate_svr(Xt, yt, Xv, yv, grid, cost, gamma).epsilon
    return _nb.fit_svr(X, y, epsilon, cost, gamma)


class _CurveModel:
    def __init__(self, curve: PowerCurve):
        self.curve = curve

    def predict(self, X):
        return power_curve_predict(self.curve, np.maximum(np.asarray(X)[:, 0], 0.0))

    def to_dict(self) -> dict:
        return {"version": 1, "kind": "powercurve", "speeds": self.curve.speeds.tolist(),
                "powers": self.curve.powers.tolist(), "cut_in": self.curve.cut_in, "cut_out": self.curve.cut_out}


def _fit_powercurve(X, y, fs, ctx):
    if ctx.power_curve is None:
        raise ValueError("method 'powercurve' needs a builder power curve")
    return _CurveModel(ctx.power_curve)


@dataclass(frozen=True)
class MethodInfo:
    fit: Callable | None
    label: str
    farm_level: bool = False


METHODS: dict[str, MethodInfo] = {
    "persistence": MethodInfo(None, "Persistence", farm_level=True),
    "linear": MethodInfo(_fit_linear, "Linear Regression"),
    "logistic": MethodInfo(_fit_logistic, "Logistic Regression"),
    "polylogistic": MethodInfo(_fit_polylogistic, "Polynomial Log. Reg."),
    "lasso": MethodInfo(_fit_lasso, "LASSO"),
    "cart": MethodInfo(_fit_cart, "CART"),
    "bagging": MethodInfo(_fit_bagging, "CART-Bagging"),
    "rf": MethodInfo(_fit_rf, "RF"),
    "svr": MethodInfo(_fit_svr, "SVM for regression"),
    "knn": MethodInfo(_fit_knn, "kNN"),
    "powercurve": MethodInfo(_fit_powercurve, "Builder power curve"),
}
ALIASES = {"ols": "linear", "cart-bagging": "bagging", "svm": "svr", "randomforest": "rf"}

# row structure of the local-sensor comparison table: persistence, six
# wind-only methods (RF coincides with bagging there), nine all-variable ones
REFERENCE_LAYOUT = (
    ("persistence", None),
    *((m, "wind") for m in ("linear", "logistic", "polylogistic", "cart", "bagging", "svr")),
    *((m, "all") for m in ("linear", "logistic", "polylogistic", "lasso", "cart", "bagging", "rf", "svr", "knn")),
)


def canonical_method(name: str) -> str:
    key = name.strip().lower()
    key = ALIASES.get(key, key)
    if key not in METHODS:
        raise KeyError(f"unknown method {name!r}; known: {', '.join(sorted(METHODS))}")
    return key


@dataclass(frozen=True)
class MethodSpec:
    name: str
    feature_set: FeatureSet | None = FeatureSet.ALL
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "name", canonical_method(self.name))
        fs = None if METHODS[self.name].farm_level else FeatureSet(self.feature_set or FeatureSet.ALL)
        object.__setattr__(self, "feature_set", fs)

    @property
    def feature_tag(self) -> str:
        return "none" if self.feature_set is None else self.feature_set.value


# --------------------------------------------------------------------------
# farm models


@dataclass
class FarmModel:
    models: list
    method: str
    feature_set: FeatureSet | None
    mode: str
    turbine_ids: list[str]

    def predict_turbines(self, X) -> np.ndarray:
        """``(n_turbines, T)`` predictions from a ``(n_turbines, T, 7)`` feature stack."""
        X = np.asarray(X, dtype=float)
        if X.shape[0] != len(self.models):
            raise ValueError(f"expected features for {len(self.models)} turbines, got {X.shape[0]}")
        return np.stack([m.predict(select_features(X[i], self.feature_set)) for i, m in enumerate(self.models)])


def _map(fn, items, n_jobs):
    if n_jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


class TurbineFitError(RuntimeError):
    def __init__(self, turbine_id, exc):
        super().__init__(f"turbine {turbine_id}: {exc}")
        self.turbine_id = turbine_id
        self.__cause__ = exc


def fit_farm(spec: MethodSpec, farm: FarmData, mode: str = InputMode.LOCAL, seed: int = 0, n_jobs: int = 1,
             power_curve: PowerCurve | None = None) -> FarmModel:
    """Fit one model per turbine on ``farm``.

    In ``virtual`` mode every turbine is trained on the farm-averaged
    features against its own power.
    """
    info = METHODS[spec.name]
    if info.farm_level:
        raise ValueError(f"{spec.name} is a farm-level baseline without per-turbine models")
    if mode not in InputMode.ALL:
        raise ValueError(f"unknown input mode {mode!r}")
    if farm.n_turbines < 1 or len(farm) == 0:
        raise ValueError("need at least one turbine with training rows")
    data = farm.virtual() if mode == InputMode.VIRTUAL else farm

    def one(i):
        ctx = FitContext(turbine_seed(seed, i), power_curve)
        X = select_features(data.X[i], spec.feature_set)
        try:
            return info.fit(X, data.y[i], spec.feature_set, ctx, **spec.params)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise TurbineFitError(farm.turbine_ids[i], exc) from exc

    models = _map(one, range(farm.n_turbines), n_jobs)
    return FarmModel(models, spec.name, spec.feature_set, mode, list(farm.turbine_ids))


def farm_predict(farm_model: FarmModel, X, timestamps=None) -> np.ndarray:
    """Sum of the turbine predictions per instant.

    ``X`` is a ``(n_turbines, T, 7)`` stack, or a sequence of per-turbine
    datasets whose timestamps must agree.
    """
    if isinstance(X, (list, tuple)) and X and hasattr(X[0], "timestamps"):
        ref = X[0].timestamps
        for ds in X[1:]:
            if ds.timestamps.shape != ref.shape or np.any(ds.timestamps != ref):
                raise ValueError("turbine timestamps are not aligned")
        X = np.stack([ds.X for ds in X])
    preds = farm_model.predict_turbines(X)
    return preds.sum(axis=0)


# --------------------------------------------------------------------------
# split plans and reports


@dataclass(frozen=True)
class SplitPlan:
    train: tuple[int, int]
    blocks: tuple[tuple[int, int], ...]

    def __post_init__(self):
        sizes = {e - s for s, e in self.blocks}
        if len(sizes) > 1:
            raise ValueError("test blocks must have equal length")
        spans = sorted([self.train, *self.blocks])
        for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
            if s1 < e0:
                raise ValueError("split ranges overlap")


def make_split_plan(n_rows: int, train_size: int, n_blocks: int, block_size: int) -> SplitPlan:
    """Earliest ``train_size`` rows for training, then ``n_blocks`` contiguous test blocks."""
    if min(train_size, n_blocks, block_size) < 1:
        raise ValueError("train_size, n_blocks and block_size must be positive")
    need = train_size + n_blocks * block_size
    if need > n_rows:
        raise ValueError(f"split needs {need} rows, only {n_rows} available")
    blocks = tuple((train_size + b * block_size, train_size + (b + 1) * block_size) for b in range(n_blocks))
    return SplitPlan((0, train_size), blocks)


@dataclass
class EvalReport:
    method: str
    feature_set: str
    mode: str
    block_rmse: np.ndarray
    installed_power: float

    @property
    def mean(self) -> float:
        return float(np.mean(self.block_rmse))

    @property
    def sd(self) -> float | None:
        """Sample standard deviation of the block RMSEs; ``None`` for a single block."""
        if len(self.block_rmse) < 2:
            return None
        return float(np.std(self.block_rmse, ddof=1))

    @property
    def pct_ip(self) -> float:
        return 100.0 * self.mean / self.installed_power

    @property
    def label(self) -> str:
        return METHODS[self.method].label


def evaluate(spec: MethodSpec, farm: FarmData, plan: SplitPlan, mode: str = InputMode.LOCAL, seed: int = 0,
             n_jobs: int = 1, rated_per_turbine: float = RATED_POWER_KW,
             power_curve: PowerCurve | None = None) -> EvalReport:
    """Fit on the plan's training range and score the farm total on each test block."""
    installed = farm.n_turbines * rated_per_turbine
    total = farm.total_power()
    s, e = plan.train
    errors = []
    if METHODS[spec.name].farm_level:
        for bs, be in plan.blocks:
            if bs < 1:
                raise ValueError("persistence needs an observation before the block")
            errors.append(rmse(total[bs - 1:be - 1], total[bs:be]))
    else:
        train = FarmData(farm.turbine_ids, farm.timestamps[s:e], farm.X[:, s:e], farm.y[:, s:e])
        model = fit_farm(spec, train, mode, seed, n_jobs, power_curve)
        Xtest = farm.virtual().X if mode == InputMode.VIRTUAL else farm.X
        for bs, be in plan.blocks:
            pred = farm_predict(model, Xtest[:, bs:be])
            if not np.all(np.isfinite(pred)):
                raise FloatingPointError(f"{spec.name}: non-finite predictions")
            errors.append(rmse(pred, total[bs:be]))
    return EvalReport(spec.name, spec.feature_tag, mode, np.array(errors), installed)


BLOCK_COLUMNS = ("method", "feature_set", "mode", "block_id", "rmse_kw")
SUMMARY_COLUMNS = ("method", "feature_set", "mode", "mean_rmse", "sd_rmse", "pct_ip")


def write_block_csv(path, reports) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BLOCK_COLUMNS)
        for r in reports:
            for b, v in enumerate(r.block_rmse):
                w.writerow([r.method, r.feature_set, r.mode, b, f"{v:.6f}"])


def write_summary_csv(path, reports) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in reports:
            sd = "" if r.sd is None else f"{r.sd:.6f}"
            w.writerow([r.method, r.feature_set, r.mode, f"{r.mean:.6f}", sd, f"{r.pct_ip:.4f}"])


def format_table(reports, ranked: bool = False) -> str:
    """Human-readable table in the ``Mean of RMSE / Sd of RMSE / % of IP`` layout."""
    rows = sorted(reports, key=lambda r: r.mean) if ranked else list(reports)
    head = f"{'rank ' if ranked else ''}{'method':<24}{'features':<10}{'mode':<9}{'mean RMSE':>11}{'sd RMSE':>10}{'% of IP':>9}"
    lines = [head, "-" * len(head)]
    for i, r in enumerate(rows, 1):
        sd = "n/a" if r.sd is None else f"{r.sd:.2f}"
        prefix = f"{i:<5}" if ranked else ""
        lines.append(f"{prefix}{r.label:<24}{r.feature_set:<10}{r.mode:<9}{r.mean:>11.2f}{sd:>10}{r.pct_ip:>9.2f}")
    return "\n".join(lines) + "\n"
