"""Command-line driver for the wind power study.

Every command reads one JSON config (``--config``) describing the data
source, methods, split plan and seed, and writes CSV outputs plus a
``manifest.json`` that lists content hashes and echoes the resolved config.

Commands
--------
ingest      parse SCADA CSV files into 30-minute feature rows
synth       generate a synthetic farm in the SCADA CSV schema
benchmark   method comparison on local sensors
stability   local sensors vs farm-averaged (virtual) inputs
plotdata    scatter, curve and boxplot tables for plotting
predict     fit per-turbine models, save them and their test predictions

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import forest as _forest
from . import neighbors as _nb
from .pipeline import (FEATURES, FarmData, SchemaError, TurbineDataset, build_datasets, parse_scada, write_scada)
from .synth import BETZ_LIMIT, Scenario, TurbinePhysics, power_curve_knots, theoretical_power

log = logging.getLogger("windpower")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

DEFAULT_SPLIT = {"train_size": 8000, "n_blocks": 10, "block_size": 724}

# module defaults echoed into every manifest
MODULE_DEFAULTS = {
    "rated_kw": ev.RATED_POWER_KW,
    "validation_fraction": ev.VALIDATION_FRACTION,
    "forest_trees": _forest.DEFAULT_TREES,
    "forest_min_node_size": _forest.DEFAULT_MIN_NODE_SIZE,
    "cart_min_node_size": 5,
    "cart_cv_folds": 10,
    "lasso_cv_folds": 5,
    "lasso_grid": "50 log-spaced values, lambda_max down to 1e-4 lambda_max",
    "knn_k_grid": list(_nb.DEFAULT_K_GRID),
    "svr_epsilon_factors_of_sd": list(ev.SVR_EPSILON_FACTORS),
    "svr_tolerance": _nb.SVR_TOL,
    "svr_gram_max_rows": _nb.GRAM_MAX_ROWS,
}


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# --------------------------------------------------------------------------
# config


@dataclass
class ExperimentConfig:
    seed: int
    data: dict
    runs: list[ev.MethodSpec]
    split: dict
    modes: list[str]
    rated_kw: float
    out: Path
    base_dir: Path
    plot: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Resolved config, defaults filled in, for the manifest."""
        data = dict(self.data)
        if "synth" in data:
            data["synth"] = self.scenario().to_dict()
        return {
            "seed": self.seed,
            "data": data,
            "runs": [{"method": r.name, "feature_set": r.feature_tag, "params": r.params} for r in self.runs],
            "split": self.split,
            "modes": self.modes,
            "rated_kw": self.rated_kw,
            "plot": self.plot,
            "module_defaults": MODULE_DEFAULTS,
        }

    def scenario(self) -> Scenario:
        d = json.loads(json.dumps(self.data["synth"]))
        d.setdefault("wind", {}).setdefault("seed", self.seed)
        try:
            return Scenario.from_dict(d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad synth scenario: {exc}") from exc

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def _method_entries(raw: dict) -> list[ev.MethodSpec]:
    shared = raw.get("method_params", {})
    if not isinstance(shared, dict):
        raise ConfigError("method_params must be an object keyed by method name")
    shared = {ev.canonical_method(k): v for k, v in shared.items()}

    if raw.get("layout") == "reference":
        pairs = [(m, fs, {}) for m, fs in ev.REFERENCE_LAYOUT]
    elif "layout" in raw:
        raise ConfigError(f"unknown layout {raw['layout']!r}")
    else:
        methods = raw.get("methods")
        if methods is None:
            return []
        default_fs = raw.get("feature_sets", ["all"])
        pairs = []
        for m in methods:
            if isinstance(m, str):
                name, params, fsets = m, {}, default_fs
            elif isinstance(m, dict) and "name" in m:
                name, params, fsets = m["name"], m.get("params", {}), m.get("feature_sets", default_fs)
            else:
                raise ConfigError(f"bad method entry {m!r}")
            if ev.canonical_method(name) == "persistence":
                fsets = [None]
            for fs in fsets:
                pairs.append((name, fs, params))
        seen = set()
        pairs = [p for p in pairs if not ((p[0], p[1]) in seen or seen.add((p[0], p[1])))]

    specs = []
    for name, fs, params in pairs:
        key = ev.canonical_method(name)
        merged = {**shared.get(key, {}), **params}
        specs.append(ev.MethodSpec(key, fs, merged))
    return specs


def load_config(path, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")

    if seed is None:
        seed = raw.get("seed")
    if seed is None:
        raise ConfigError("a seed is mandatory (config 'seed' or --seed)")
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")

    data = raw.get("data")
    if not isinstance(data, dict) or len({"synth", "scada", "features"} & data.keys()) != 1:
        raise ConfigError("data must hold exactly one of 'synth', 'scada' or 'features'")

    try:
        runs = _method_entries(raw)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    split = {**DEFAULT_SPLIT, **raw.get("split", {})}
    if set(split) != set(DEFAULT_SPLIT) or not all(isinstance(v, int) and v > 0 for v in split.values()):
        raise ConfigError(f"split needs positive integers {sorted(DEFAULT_SPLIT)}")
    modes = raw.get("modes", [ev.InputMode.LOCAL])
    bad = [m for m in modes if m not in ev.InputMode.ALL]
    if bad:
        raise ConfigError(f"unknown input mode(s): {bad}")
    rated = raw.get("rated_kw", ev.RATED_POWER_KW)
    if not isinstance(rated, (int, float)) or rated <= 0:
        raise ConfigError("rated_kw must be positive")
    out_dir = Path(out or raw.get("out", "results"))
    base = path.resolve().parent
    if not out_dir.is_absolute() and out is None:
        out_dir = base / out_dir

    cfg = ExperimentConfig(int(seed), data, runs, split, list(modes), float(rated), out_dir, base,
                           raw.get("plot", {}), raw)
    if "synth" in data:
        cfg.scenario()
    return cfg


# --------------------------------------------------------------------------
# data


def _read_scada(paths) -> tuple[list, list[tuple[str, int, str]]]:
    records, rejections = [], []
    for p in paths:
        try:
            with open(p, newline="", encoding="utf-8") as fh:
                res = parse_scada(fh)
        except OSError as exc:
            raise DataError(f"cannot read {p}: {exc}") from exc
        except SchemaError as exc:
            raise DataError(f"{p}: {exc}") from exc
        records.extend(res.records)
        rejections.extend((str(Path(p).name), ln, why) for ln, why in res.rejections)
    return records, rejections


def _records_to_farm(records) -> FarmData:
    datasets = build_datasets(records)
    if not datasets:
        raise DataError("no fully operational 30-minute windows in the data")
    try:
        return FarmData.align([datasets[k] for k in sorted(datasets)])
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def synth_csv_text(scenario: Scenario) -> str:
    buf = io.StringIO()
    records = [r for turbine in scenario.simulate() for r in turbine]
    records.sort(key=lambda r: (r.timestamp, r.turbine_id))
    write_scada(buf, records)
    return buf.getvalue()


def builder_curve(physics: TurbinePhysics) -> ev.PowerCurve:
    """Knot table of the clipped theoretical curve, standing in for a builder curve."""
    speeds, powers = power_curve_knots(physics, step=0.5, max_speed=physics.cut_out)
    return ev.PowerCurve(speeds, powers, physics.cut_in, physics.cut_out)


def load_farm(cfg: ExperimentConfig) -> tuple[FarmData, ev.PowerCurve | None, TurbinePhysics]:
    data = cfg.data
    curve = None
    physics = TurbinePhysics(**cfg.raw.get("physics", {})) if "physics" in cfg.raw else TurbinePhysics()
    if "synth" in data:
        scenario = cfg.scenario()
        physics = scenario.physics
        # the synthetic path goes through the CSV parser like real files
        res = parse_scada(synth_csv_text(scenario))
        if res.rejections:
            raise DataError(f"synthetic data produced {res.n_rejected} rejected lines")
        farm = _records_to_farm(res.records)
        curve = builder_curve(physics)
    elif "scada" in data:
        paths = data["scada"] if isinstance(data["scada"], list) else [data["scada"]]
        records, rejections = _read_scada([cfg.path(p) for p in paths])
        if rejections:
            log.warning("%d SCADA lines rejected", len(rejections))
        farm = _records_to_farm(records)
    else:
        farm = read_features(cfg.path(data["features"]))
    pc = data.get("power_curve")
    if pc:
        try:
            curve = ev.load_power_curve(cfg.path(pc["csv"]), cfg.path(pc["json"]))
        except (OSError, KeyError, ValueError) as exc:
            raise DataError(f"cannot load power curve: {exc}") from exc
    return farm, curve, physics


FEATURE_COLUMNS = ("timestamp", "turbine_id", *FEATURES, "y")


def write_features(path, datasets) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURE_COLUMNS)
        for ds in datasets:
            for ts, x, y in zip(ds.timestamps, ds.X, ds.y):
                w.writerow([f"{np.datetime_as_string(ts, unit='s')}Z", ds.turbine_id, *(repr(float(v)) for v in x),
                            repr(float(y))])


def read_features(path) -> FarmData:
    by_turbine: dict[str, list] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in FEATURE_COLUMNS if c not in (reader.fieldnames or [])]
            if missing:
                raise DataError(f"feature file lacks column(s): {', '.join(missing)}")
            for row in reader:
                by_turbine.setdefault(row["turbine_id"], []).append(row)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if not by_turbine:
        raise DataError(f"{path}: no feature rows")
    datasets = []
    for tid in sorted(by_turbine):
        rows = by_turbine[tid]
        ts = np.array([r["timestamp"].rstrip("Z") for r in rows], dtype="datetime64[s]")
        X = np.array([[float(r[c]) for c in FEATURES] for r in rows])
        y = np.array([float(r["y"]) for r in rows])
        datasets.append(TurbineDataset(tid, ts, X, y))
    try:
        return FarmData.align(datasets)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def make_plan(cfg: ExperimentConfig, farm: FarmData) -> ev.SplitPlan:
    try:
        return ev.make_split_plan(len(farm), **cfg.split)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


# --------------------------------------------------------------------------
# outputs


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, cfg: ExperimentConfig | None, files, complete: bool = True,
                   failures=(), extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "complete": complete,
        "failures": list(failures),
        "config": cfg.echo() if cfg else None,
        "outputs": {str(Path(f).relative_to(out)): _sha256(Path(f)) for f in sorted(files)},
        "created": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _run_reports(cfg, farm, plan, curve, modes, jobs):
    """Evaluate every run in every mode; failures are collected, not raised."""
    reports, failures = [], []
    for spec in cfg.runs:
        for mode in modes:
            log.info("evaluating %s [%s] in %s mode", spec.name, spec.feature_tag, mode)
            try:
                reports.append(ev.evaluate(spec, farm, plan, mode, cfg.seed, jobs, cfg.rated_kw, curve))
            except (ev.TurbineFitError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError,
                    ValueError) as exc:
                log.error("%s [%s] %s failed: %s", spec.name, spec.feature_tag, mode, exc)
                failures.append({"method": spec.name, "feature_set": spec.feature_tag, "mode": mode,
                                 "error": str(exc)})
    return reports, failures


# --------------------------------------------------------------------------
# commands


def cmd_ingest(cfg: ExperimentConfig, jobs: int) -> int:
    data = cfg.data
    if "scada" in data:
        paths = data["scada"] if isinstance(data["scada"], list) else [data["scada"]]
        records, rejections = _read_scada([cfg.path(p) for p in paths])
    elif "synth" in data:
        res = parse_scada(synth_csv_text(cfg.scenario()))
        records, rejections = res.records, [("synthetic", ln, why) for ln, why in res.rejections]
    else:
        raise ConfigError("ingest needs a 'scada' or 'synth' data source")
    datasets = build_datasets(records)
    if not datasets:
        raise DataError("no fully operational 30-minute windows in the data")
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    feats = out / "features.csv"
    write_features(feats, [datasets[k] for k in sorted(datasets)])
    rej = out / "rejections.csv"
    _write_csv(rej, ["file", "line", "reason"], rejections)
    counts = out / "ingest_summary.csv"
    _write_csv(counts, ["turbine_id", "rows", "skipped_windows"],
               [[k, len(datasets[k]), datasets[k].skipped_windows] for k in sorted(datasets)])
    write_manifest(out, "ingest", cfg, [feats, rej, counts], extra={"rejected_lines": len(rejections)})
    print(f"{sum(len(d) for d in datasets.values())} feature rows from {len(datasets)} turbine(s), "
          f"{len(rejections)} rejected line(s) -> {out}")
    return EXIT_OK


def cmd_synth(cfg: ExperimentConfig, jobs: int) -> int:
    if "synth" not in cfg.data:
        raise ConfigError("synth needs a 'synth' data source")
    scenario = cfg.scenario()
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    scada = out / "scada.csv"
    with open(scada, "w", newline="", encoding="utf-8") as fh:
        fh.write(synth_csv_text(scenario))
    scen = out / "scenario.json"
    with open(scen, "w", encoding="utf-8") as fh:
        json.dump(scenario.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    pc_csv, pc_json = out / "power_curve.csv", out / "power_curve.json"
    ev.save_power_curve(builder_curve(scenario.physics), pc_csv, pc_json)
    write_manifest(out, "synth", cfg, [scada, scen, pc_csv, pc_json])
    print(f"{scenario.n_turbines} turbine(s) x {scenario.n_steps} steps -> {scada}")
    return EXIT_OK


def _require_runs(cfg: ExperimentConfig) -> None:
    if not cfg.runs:
        raise ConfigError("config needs a non-empty 'methods' list or \"layout\": \"reference\"")


def _finish(out, command, cfg, files, failures, extra=None) -> int:
    write_manifest(out, command, cfg, files, complete=not failures, failures=failures, extra=extra)
    return EXIT_NUMERICAL if failures else EXIT_OK


def cmd_benchmark(cfg: ExperimentConfig, jobs: int) -> int:
    _require_runs(cfg)
    farm, curve, _ = load_farm(cfg)
    plan = make_plan(cfg, farm)
    reports, failures = _run_reports(cfg, farm, plan, curve, [ev.InputMode.LOCAL], jobs)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    summary, blocks, table = out / "summary.csv", out / "blocks.csv", out / "table.txt"
    ev.write_summary_csv(summary, reports)
    ev.write_block_csv(blocks, reports)
    text = ev.format_table(reports, ranked=True)
    table.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return _finish(out, "benchmark", cfg, [summary, blocks, table], failures,
                   {"n_turbines": farm.n_turbines, "n_rows": len(farm)})


STABILITY_COLUMNS = ("method", "feature_set", "local_mean_rmse", "virtual_mean_rmse", "delta_rmse", "delta_pct")


def cmd_stability(cfg: ExperimentConfig, jobs: int) -> int:
    _require_runs(cfg)
    farm, curve, _ = load_farm(cfg)
    if farm.n_turbines < 2:
        raise DataError("stability needs at least 2 turbines: averaging one turbine changes nothing")
    plan = make_plan(cfg, farm)
    reports, failures = _run_reports(cfg, farm, plan, curve, list(ev.InputMode.ALL), jobs)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    by_key = {(r.method, r.feature_set, r.mode): r for r in reports}
    rows, lines = [], []
    for spec in cfg.runs:
        loc = by_key.get((spec.name, spec.feature_tag, ev.InputMode.LOCAL))
        vir = by_key.get((spec.name, spec.feature_tag, ev.InputMode.VIRTUAL))
        if loc is None or vir is None:
            continue
        delta = vir.mean - loc.mean
        rows.append([spec.name, spec.feature_tag, f"{loc.mean:.6f}", f"{vir.mean:.6f}", f"{delta:.6f}",
                     f"{100.0 * delta / loc.mean:.4f}" if loc.mean > 0 else ""])
        lines.append(f"{loc.label:<24}{spec.feature_tag:<10}{loc.mean:>11.2f}{vir.mean:>11.2f}{delta:>+11.2f}")
    paired = out / "stability.csv"
    _write_csv(paired, STABILITY_COLUMNS, rows)
    summary, blocks, table = out / "summary.csv", out / "blocks.csv", out / "table.txt"
    ev.write_summary_csv(summary, reports)
    ev.write_block_csv(blocks, reports)
    head = f"{'method':<24}{'features':<10}{'local':>11}{'virtual':>11}{'delta':>11}"
    text = "\n".join([head, "-" * len(head), *lines]) + "\n"
    table.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return _finish(out, "stability", cfg, [paired, summary, blocks, table], failures)


def cmd_plotdata(cfg: ExperimentConfig, jobs: int) -> int:
    _require_runs(cfg)
    farm, curve, physics = load_farm(cfg)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    turbine = cfg.plot.get("turbine", farm.turbine_ids[0])
    if turbine not in farm.turbine_ids:
        raise ConfigError(f"plot turbine {turbine!r} not in the farm")
    i = farm.turbine_ids.index(turbine)

    scatter = out / "scatter.csv"
    w = farm.X[i, :, 0]
    _write_csv(scatter, ["timestamp", "turbine_id", "wind_speed_ms", "wind_speed_cubed", "power_kw"],
               [[f"{np.datetime_as_string(t, unit='s')}Z", turbine, f"{a:.6f}", f"{a ** 3:.6f}", f"{p:.6f}"]
                for t, a, p in zip(farm.timestamps, w, farm.y[i])])

    step = float(cfg.plot.get("curve_step", 0.25))
    speeds = np.arange(0.0, physics.cut_out + 5.0 + 1e-9, step)
    betz = TurbinePhysics(physics.rho, physics.rotor_diameter, BETZ_LIMIT, physics.rated_power, physics.cut_in,
                          physics.cut_out)
    p_betz = theoretical_power(betz, speeds, clip=False)
    p_cfg = theoretical_power(physics, speeds, clip=False)
    p_builder = ev.power_curve_predict(curve, speeds) if curve is not None else None
    curves = out / "curves.csv"
    _write_csv(curves, ["wind_speed_ms", "betz_kw", "configured_cp_kw", "builder_kw"],
               [[f"{s:.4f}", f"{a:.6f}", f"{b:.6f}", "" if p_builder is None else f"{p_builder[k]:.6f}"]
                for k, (s, a, b) in enumerate(zip(speeds, p_betz, p_cfg))])

    plan = make_plan(cfg, farm)
    reports, failures = _run_reports(cfg, farm, plan, curve, cfg.modes, jobs)
    box = out / "boxplot.csv"
    ev.write_block_csv(box, reports)
    return _finish(out, "plotdata", cfg, [scatter, curves, box], failures)


def _model_dict(model) -> dict:
    if hasattr(model, "to_dict"):
        return model.to_dict()
    raise TypeError(f"{type(model).__name__} cannot be serialized")


def cmd_predict(cfg: ExperimentConfig, jobs: int) -> int:
    _require_runs(cfg)
    farm, curve, _ = load_farm(cfg)
    plan = make_plan(cfg, farm)
    out = cfg.out
    model_dir = out / "models"
    model_dir.mkdir(parents=True, exist_ok=True)
    s, e = plan.train
    train = FarmData(farm.turbine_ids, farm.timestamps[s:e], farm.X[:, s:e], farm.y[:, s:e])
    total = farm.total_power()
    files, rows, failures = [], [], []
    for spec in cfg.runs:
        for mode in cfg.modes:
            tag = f"{spec.name}_{spec.feature_tag}_{mode}"
            if ev.METHODS[spec.name].farm_level:
                preds = {(bs, be): total[bs - 1:be - 1] for bs, be in plan.blocks}
            else:
                try:
                    model = ev.fit_farm(spec, train, mode, cfg.seed, jobs, curve)
                except (ev.TurbineFitError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                    failures.append({"method": spec.name, "feature_set": spec.feature_tag, "mode": mode,
                                     "error": str(exc)})
                    continue
                for tid, m in zip(model.turbine_ids, model.models):
                    path = model_dir / f"{tag}_{tid}.json"
                    with open(path, "w", encoding="utf-8") as fh:
                        json.dump({"method": spec.name, "turbine_id": tid, "mode": mode, "model": _model_dict(m)},
                                  fh, sort_keys=True)
                        fh.write("\n")
                    files.append(path)
                Xtest = farm.virtual().X if mode == ev.InputMode.VIRTUAL else farm.X
                preds = {(bs, be): ev.farm_predict(model, Xtest[:, bs:be]) for bs, be in plan.blocks}
            for b, (bs, be) in enumerate(plan.blocks):
                for k, t in enumerate(range(bs, be)):
                    rows.append([spec.name, spec.feature_tag, mode, b,
                                 f"{np.datetime_as_string(farm.timestamps[t], unit='s')}Z",
                                 f"{preds[(bs, be)][k]:.6f}", f"{total[t]:.6f}"])
    pred_path = out / "predictions.csv"
    _write_csv(pred_path, ["method", "feature_set", "mode", "block_id", "timestamp", "predicted_kw", "observed_kw"],
               rows)
    files.append(pred_path)
    return _finish(out, "predict", cfg, files, failures)


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "benchmark": cmd_benchmark,
    "stability": cmd_stability,
    "plotdata": cmd_plotdata,
    "predict": cmd_predict,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="windpower", description="Wind farm power modeling study.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    parser.add_argument("--out", default=None, help="output directory (overrides the config)")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads for per-turbine fits")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.seed, args.out)
        return COMMANDS[args.command](cfg, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, ArithmeticError, np.linalg.LinAlgError, ev.TurbineFitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
