"""End-to-end acceptance checks.

Each test prints one ``[PASS]`` or ``[FAIL]`` line, and the terminal summary repeats them all.
"""
import json
import time

import numpy as np
import pytest

from conftest import record
from oracles import exhaustive_split, svr_dual_grid
from windpower import cli
from windpower.evaluation import MethodSpec, evaluate, make_split_plan, pct_installed_power
from windpower.forest import fit_bagging, fit_forest
from windpower.neighbors import fit_svr, rbf_kernel, svr_dual_objective
from windpower.parametric import (SigmoidVariant, fit_lasso, fit_ols, lambda_max, sigmoid_design, sigmoid_gradient,
                                  sigmoid_objective)
from windpower.pipeline import (FarmData, StandardizationStats, aggregate_30min, apply_stats, circular_mean,
                                compute_stats, farm_from_records, parse_scada)
from windpower.synth import Scenario, WindProcess
from windpower.tree import TreeParams, best_split, grow_tree

pytestmark = pytest.mark.acceptance

RESULTS: dict[int, str] = {}
# shared fixture costs, charged to the first criterion that uses them
SETUP_SECONDS: dict[str, float] = {}

SEED = 42
PLAN_ARGS = (8000, 10, 724)
BAGGING_B = 100


def report(capsys, n, ok, detail, started, extra_seconds=0.0):
    elapsed = time.perf_counter() - started + extra_seconds
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {detail} ({elapsed:.1f} s)"
    RESULTS[n] = line
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def default_farm(decorrelation: float) -> FarmData:
    sc = Scenario(wind=WindProcess(seed=SEED), spatial_decorrelation=decorrelation)
    res = parse_scada(cli.synth_csv_text(sc))
    assert res.n_rejected == 0
    return farm_from_records(res.records)


@pytest.fixture(scope="module")
def farm_03():
    t = time.perf_counter()
    farm = default_farm(0.3)
    SETUP_SECONDS["farm"] = time.perf_counter() - t
    return farm


@pytest.fixture(scope="module")
def bagging_local_03(farm_03):
    t = time.perf_counter()
    plan = make_split_plan(len(farm_03), *PLAN_ARGS)
    rep = evaluate(MethodSpec("bagging", "all", {"b": BAGGING_B}), farm_03, plan, "local", SEED)
    SETUP_SECONDS["bagging"] = time.perf_counter() - t
    return rep


# --------------------------------------------------------------------------


def test_criterion_01_pct_installed_power(capsys):
    t = time.perf_counter()
    a = pct_installed_power(203.50, 6, 2050)
    b = pct_installed_power(855.52, 6, 2050)
    ok = abs(a - 1.65) <= 0.005 and abs(b - 6.96) <= 0.005
    report(capsys, 1, ok, f"%IP(203.50)={a:.4f} vs 1.65, %IP(855.52)={b:.4f} vs 6.96, tol 0.005", t)


def test_criterion_02_ensemble_identities(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(SEED)
    X = rng.normal(size=(500, 7))
    y = 3 * X[:, 0] + np.sin(2 * X[:, 1]) + X[:, 2] * X[:, 3] + rng.normal(0, 0.3, 500)
    Q = rng.normal(size=(500, 7))
    rf = fit_forest(X, y, b=25, mtry=7, master_seed=SEED)
    bag = fit_bagging(X, y, b=25, master_seed=SEED)
    d_rf = np.max(np.abs(rf.predict(Q) - bag.predict(Q)))
    single = fit_forest(X, y, b=1, mtry=7, bootstrap=False, min_node_size=1, master_seed=SEED)
    cart = grow_tree(X, y, TreeParams(min_node_size=1))
    d_cart = np.max(np.abs(single.predict(Q) - cart.predict(Q)))
    ok = d_rf <= 1e-12 and d_cart <= 1e-12 and time.perf_counter() - t < 10
    report(capsys, 2, ok, f"max|RF(7)-bagging|={d_rf:.1e}, max|B=1 no-bootstrap - CART|={d_cart:.1e}", t)


def test_criterion_03_split_oracle(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(SEED)
    mismatches = 0
    for _ in range(50):
        n, p = int(rng.integers(1, 13)), int(rng.integers(1, 4))
        X = rng.integers(0, 5, size=(n, p)).astype(float) + rng.choice([0.0, 0.5], size=(n, p))
        y = rng.integers(0, 30, size=n).astype(float)
        got, ref = best_split(X, y), exhaustive_split(X, y, 1)
        if ref is None:
            mismatches += got is not None
        else:
            mismatches += got is None or (got.feature, got.threshold) != ref[:2] or abs(
                got.deviance - float(ref[2])) > 1e-9
    ok = mismatches == 0 and time.perf_counter() - t < 5
    report(capsys, 3, ok, f"{50 - mismatches}/50 datasets match exhaustive enumeration", t)


def test_criterion_04_gradient_check(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for variant in (SigmoidVariant.LOGISTIC, SigmoidVariant.POLYNOMIAL_LOGISTIC):
        X = np.column_stack([rng.uniform(0, 15, 80), rng.normal(size=(80, 6))])
        D = sigmoid_design(X, variant)
        y = rng.uniform(0, 2000, 80)
        for _ in range(10):
            theta = np.r_[rng.uniform(500, 2500), rng.normal(0, 0.3, D.shape[1]) / np.r_[1, D[:, 1:].std(axis=0)]]
            g = sigmoid_gradient(theta, D, y)
            h = 1e-6 * np.maximum(np.abs(theta), 1e-3)
            fd = np.array([(sigmoid_objective(theta + h[k] * e, D, y) - sigmoid_objective(theta - h[k] * e, D, y))
                           / (2 * h[k]) for k, e in enumerate(np.eye(theta.size))])
            worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    ok = worst < 1e-5 and time.perf_counter() - t < 5
    report(capsys, 4, ok, f"worst relative gradient error {worst:.2e} over 2 variants x 10 points", t)


def test_criterion_05_lasso_limits(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(SEED)
    X = rng.normal(size=(200, 7))
    y = X @ rng.normal(size=7) + rng.normal(size=200)
    zero = fit_lasso(X, y, lambda_grid=[0.0])
    ols = fit_ols(X, y)
    d = max(abs(zero.intercept - ols.intercept), np.max(np.abs(zero.coefficients - ols.coefficients)))
    lmax = lambda_max(X, y)
    at_max = [fit_lasso(X, y, lambda_grid=[f * lmax]).coefficients for f in (1.0, 1.5, 10.0)]
    all_zero = all(np.all(c == 0.0) for c in at_max)
    ok = d < 1e-6 and all_zero and time.perf_counter() - t < 5
    report(capsys, 5, ok, f"lambda=0 vs OLS max diff {d:.1e}; slopes exactly zero at lambda>=lambda_max: {all_zero}",
           t)


def test_criterion_06_svr_dual(capsys):
    t = time.perf_counter()
    gaps = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(3, 2))
        y = rng.normal(0, 2, 3)
        eps, cost, gamma = float(rng.uniform(0.05, 0.5)), float(rng.uniform(0.5, 3)), float(rng.uniform(0.2, 2))
        ident = StandardizationStats(np.zeros(2), np.ones(2), ("a", "b"))
        m = fit_svr(X, y, eps, cost, gamma, stats=ident)
        beta = np.zeros(3)
        for row, c in zip(m.support_rows, m.coefficients):
            beta[np.flatnonzero(np.all(X == row, axis=1))[0]] = c
        K = rbf_kernel(X, X, gamma)
        gaps.append(abs(svr_dual_objective(beta, K, y, eps) - svr_dual_grid(K, y, eps, cost)[0]))

    rng = np.random.default_rng(SEED)
    X = rng.uniform(-3, 3, (200, 2))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1] + rng.normal(0, 0.1, 200)
    eps, cost = 0.2, 2.0
    m = fit_svr(X, y, eps, cost, 0.5)
    resid = y - m.predict(X)
    Z = m.stats.apply(X)
    on_support = np.array([np.any(np.all(m.support_rows == z, axis=1)) for z in Z])
    # rows strictly inside the tube carry no weight
    sparse = not np.any(on_support & (np.abs(resid) < eps - 1e-3))
    ok = max(gaps) < 1e-4 and sparse and m.converged and 0 < on_support.sum() < 200 and time.perf_counter() - t < 30
    report(capsys, 6, ok, f"worst n=3 dual gap {max(gaps):.1e}; n=200: {on_support.sum()} support vectors, "
                          f"none strictly inside the tube: {sparse}", t)


def test_criterion_07_method_ordering(capsys, farm_03, bagging_local_03):
    t = time.perf_counter()
    plan = make_split_plan(len(farm_03), *PLAN_ARGS)
    r = {"bagging": bagging_local_03}
    for name, fs in (("cart", "all"), ("persistence", None), ("linear", "wind"), ("polylogistic", "wind")):
        r[name] = evaluate(MethodSpec(name, fs), farm_03, plan, "local", SEED)

    def margin(better, worse):
        gap = r[worse].mean - r[better].mean
        return gap, gap > max(r[better].sd, r[worse].sd)

    checks = [("bagging", "cart"), ("cart", "persistence"), ("polylogistic", "linear")]
    outcome = [(b, w, *margin(b, w)) for b, w in checks]
    setup = SETUP_SECONDS.pop("farm", 0.0) + SETUP_SECONDS.pop("bagging", 0.0)
    ok = all(o[3] for o in outcome) and time.perf_counter() - t + setup < 300
    summary = "; ".join(f"{b} {r[b].mean:.1f}+-{r[b].sd:.1f} < {w} {r[w].mean:.1f}+-{r[w].sd:.1f} (gap {g:.1f})"
                        for b, w, g, _ in outcome)
    report(capsys, 7, ok, summary, t, setup)


def test_criterion_08_stability(capsys, farm_03, bagging_local_03):
    t = time.perf_counter()
    spec = MethodSpec("bagging", "all", {"b": BAGGING_B})
    plan = make_split_plan(len(farm_03), *PLAN_ARGS)
    vir = evaluate(spec, farm_03, plan, "virtual", SEED)
    loc = bagging_local_03
    farm_0 = default_farm(0.0)
    plan_0 = make_split_plan(len(farm_0), *PLAN_ARGS)
    loc_0 = evaluate(spec, farm_0, plan_0, "local", SEED)
    vir_0 = evaluate(spec, farm_0, plan_0, "virtual", SEED)
    rel_0 = abs(vir_0.mean - loc_0.mean) / loc_0.mean
    ok = vir.mean >= loc.mean and rel_0 < 0.01 and time.perf_counter() - t < 300
    report(capsys, 8, ok, f"s=0.3: virtual {vir.mean:.1f} vs local {loc.mean:.1f}; "
                          f"s=0: |delta| = {100 * rel_0:.2f}% of local {loc_0.mean:.1f}", t)


def test_criterion_09_cli_determinism(capsys, tmp_path):
    t = time.perf_counter()
    cfg = {"seed": SEED, "data": {"synth": {"n_turbines": 3, "n_steps": 10000}},
           "methods": ["persistence", "ols", "cart", "knn", {"name": "bagging", "params": {"b": 20}},
                       {"name": "rf", "params": {"b": 20}}, "polylogistic", "lasso"],
           "feature_sets": ["wind", "all"], "split": {"train_size": 1000, "n_blocks": 4, "block_size": 200}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    codes = [cli.main(["benchmark", "--config", str(path), "--out", str(tmp_path / d), "--jobs", j])
             for d, j in (("a", "1"), ("b", "4"), ("c", "1"))]
    names = ("summary.csv", "blocks.csv", "table.txt")
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / d / f).read_bytes() for f in names for d in "bc")
    ok = codes == [0, 0, 0] and same and time.perf_counter() - t < 600
    report(capsys, 9, ok, f"exit codes {codes}; result files byte-identical across --jobs 1/4/1: {same}", t)


def test_criterion_10_pipeline_properties(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(SEED)
    failures = {"unit_norm": 0, "w_var": 0, "wraparound": 0, "round_trip": 0}
    for case in range(1000):
        # one turbine, a few 30-minute windows with directions straddling north
        n_win = int(rng.integers(1, 5))
        base = rng.uniform(-30, 30, n_win)
        recs = [record(3 * w + i, float(rng.uniform(0, 25)), float((base[w] + rng.normal(0, 15)) % 360))
                for w in range(n_win) for i in range(3)]
        ds = aggregate_30min(recs)
        failures["unit_norm"] += not np.allclose(ds.X[:, 1] ** 2 + ds.X[:, 2] ** 2, 1.0, atol=1e-9)
        failures["w_var"] += bool(np.any(ds.X[:, 4] < 0))

        a = rng.uniform(0, 360, int(rng.integers(1, 8)))
        if np.hypot(np.cos(np.deg2rad(a)).mean(), np.sin(np.deg2rad(a)).mean()) > 1e-6:
            shift = rng.uniform(-720, 720)
            m0, m1 = circular_mean(a), circular_mean(a + shift + 360 * rng.integers(-3, 4, a.size))
            wrapped = abs((m1 - (m0 + shift) + 180) % 360 - 180) < 1e-7
            failures["wraparound"] += not (0 <= m0 < 360 and 0 <= m1 < 360 and wrapped)

        n, p = int(rng.integers(2, 50)), int(rng.integers(1, 8))
        X = rng.normal(rng.uniform(-100, 100, p), rng.uniform(0.1, 50, p), size=(n, p))
        stats = compute_stats(X, names=[f"x{j}" for j in range(p)])
        Z = apply_stats(stats, X)
        back = Z * stats.std + stats.mean
        failures["round_trip"] += not (np.allclose(back, X, rtol=1e-12, atol=1e-9)
                                       and np.all(np.abs(Z.mean(axis=0)) < 1e-9)
                                       and np.all(np.abs(Z.std(axis=0, ddof=1) - 1) < 1e-9))
    ok = not any(failures.values()) and time.perf_counter() - t < 10
    report(capsys, 10, ok, f"1000 randomized cases, failures by invariant {failures}", t)
