import csv
import hashlib
import json
import subprocess
import sys

import pytest

from windpower import cli

SPLIT = {"train_size": 600, "n_blocks": 3, "block_size": 100}
SYNTH = {"n_turbines": 3, "n_steps": 5000}


def write_config(tmp_path, name="cfg.json", **kw):
    cfg = {"seed": 7, "data": {"synth": SYNTH}, "split": SPLIT, "out": "out", **kw}
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(tmp_path, command, **kw):
    path = write_config(tmp_path, **kw)
    return cli.main([command, "--config", str(path)]), tmp_path / kw.get("out", "out")


# --------------------------------------------------------------------------
# config handling


def test_benchmark_two_methods(tmp_path):
    code, out = run(tmp_path, "benchmark", methods=["persistence", "ols"])
    assert code == cli.EXIT_OK
    rows = read_rows(out / "summary.csv")
    assert [(r["method"], r["feature_set"]) for r in rows] == [("persistence", "none"), ("linear", "all")]
    assert len(read_rows(out / "blocks.csv")) == 6
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["complete"] and manifest["config"]["seed"] == 7


def test_unknown_method_is_config_error(tmp_path, capsys):
    code, _ = run(tmp_path, "benchmark", methods=["xgboost"])
    assert code == cli.EXIT_CONFIG
    assert "xgboost" in capsys.readouterr().err


@pytest.mark.parametrize("patch", [
    {"seed": None}, {"seed": -1}, {"seed": 2**64}, {"data": {}},
    {"data": {"synth": SYNTH, "scada": "x.csv"}}, {"methods": []}, {"split": {"train_size": 0}},
    {"modes": ["global"]}, {"layout": "other"},
])
def test_bad_configs(tmp_path, patch):
    raw = {"seed": 7, "data": {"synth": SYNTH}, "methods": ["ols"], **patch}
    raw = {k: v for k, v in raw.items() if v is not None}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw))
    assert cli.main(["benchmark", "--config", str(path)]) == cli.EXIT_CONFIG


def test_missing_config_file_and_bad_json(tmp_path):
    assert cli.main(["benchmark", "--config", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG
    (tmp_path / "bad.json").write_text("{not json")
    assert cli.main(["benchmark", "--config", str(tmp_path / "bad.json")]) == cli.EXIT_CONFIG
    assert cli.main(["nonsense", "--config", "x"]) == cli.EXIT_CONFIG


def test_seed_flag_overrides_and_out_resolution(tmp_path, monkeypatch):
    path = write_config(tmp_path, methods=["ols"])
    cfg = cli.load_config(path, seed=99)
    assert cfg.seed == 99 and cfg.out == tmp_path / "out"
    assert cfg.scenario().wind.seed == 99
    monkeypatch.chdir(tmp_path)
    assert cli.load_config(path, out="elsewhere").out.name == "elsewhere"


def test_config_method_entries(tmp_path):
    path = write_config(tmp_path, methods=["persistence", "OLS", {"name": "rf", "params": {"b": 3},
                                                                  "feature_sets": ["wind"]}],
                        feature_sets=["wind", "all"], method_params={"rf": {"mtry": 1}})
    runs = cli.load_config(path).runs
    assert [(r.name, r.feature_tag) for r in runs] == [
        ("persistence", "none"), ("linear", "wind"), ("linear", "all"), ("rf", "wind")]
    assert runs[-1].params == {"mtry": 1, "b": 3}


def test_reference_layout_config(tmp_path):
    path = write_config(tmp_path, layout="reference")
    assert len(cli.load_config(path).runs) == 16


@pytest.mark.slow
def test_reference_layout_benchmark(tmp_path):
    code, out = run(tmp_path, "benchmark", layout="reference",
                    method_params={"bagging": {"b": 5}, "rf": {"b": 5}, "svr": {"max_rows": 300}})
    assert code == cli.EXIT_OK
    assert len(read_rows(out / "summary.csv")) == 16
    table = (out / "table.txt").read_text().splitlines()
    assert len([ln for ln in table if ln[:1].isdigit()]) == 16


# --------------------------------------------------------------------------
# commands


def test_stability_refuses_single_turbine(tmp_path):
    code, _ = run(tmp_path, "stability", methods=["ols"], data={"synth": {"n_turbines": 1, "n_steps": 5000}})
    assert code == cli.EXIT_DATA


def test_stability_zero_decorrelation(tmp_path):
    code, out = run(tmp_path, "stability", methods=["persistence", "ols"],
                    data={"synth": {**SYNTH, "spatial_decorrelation": 0.0}})
    assert code == cli.EXIT_OK
    rows = read_rows(out / "stability.csv")
    assert [r["method"] for r in rows] == ["persistence", "linear"]
    assert float(rows[0]["delta_rmse"]) == 0
    # identical sensor readings everywhere: averaging changes nothing
    assert abs(float(rows[1]["delta_pct"])) < 1


def test_plotdata_outputs(tmp_path):
    code, out = run(tmp_path, "plotdata", methods=["ols"], modes=["local", "virtual"], plot={"turbine": "T2"})
    assert code == cli.EXIT_OK
    scatter = read_rows(out / "scatter.csv")
    assert {r["turbine_id"] for r in scatter} == {"T2"}
    r = scatter[0]
    assert float(r["wind_speed_cubed"]) == pytest.approx(float(r["wind_speed_ms"]) ** 3, rel=1e-5)
    curves = read_rows(out / "curves.csv")
    assert float(curves[0]["wind_speed_ms"]) == 0 and float(curves[0]["betz_kw"]) == 0
    assert float(curves[-1]["wind_speed_ms"]) == 30.0 and len(curves) == 121
    assert all(float(c["betz_kw"]) >= float(c["configured_cp_kw"]) for c in curves)
    box = read_rows(out / "boxplot.csv")
    assert len(box) == 6 and {b["mode"] for b in box} == {"local", "virtual"}


def test_plotdata_unknown_turbine(tmp_path):
    code, _ = run(tmp_path, "plotdata", methods=["ols"], plot={"turbine": "T9"})
    assert code == cli.EXIT_CONFIG


def test_manifest_hashes_and_reruns(tmp_path):
    path = write_config(tmp_path, methods=["persistence", "ols", {"name": "bagging", "params": {"b": 4}}])
    assert cli.main(["benchmark", "--config", str(path), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["benchmark", "--config", str(path), "--out", str(tmp_path / "b"), "--jobs", "3"]) == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    for name, digest in ma["outputs"].items():
        assert hashlib.sha256((tmp_path / "a" / name).read_bytes()).hexdigest() == digest
        assert mb["outputs"][name] == digest


def test_synth_ingest_and_feature_round_trip(tmp_path):
    code, _ = run(tmp_path, "synth", out="s")
    assert code == 0
    scada = tmp_path / "s" / "scada.csv"
    assert scada.read_text().startswith("timestamp,")
    assert json.loads((tmp_path / "s" / "scenario.json").read_text())["n_turbines"] == 3

    code, _ = run(tmp_path, "ingest", name="ing.json", out="i", data={"scada": ["s/scada.csv"]})
    assert code == 0
    counts = read_rows(tmp_path / "i" / "ingest_summary.csv")
    assert [c["turbine_id"] for c in counts] == ["T1", "T2", "T3"]
    assert read_rows(tmp_path / "i" / "rejections.csv") == []

    # benchmarking from the feature file matches benchmarking from the synthetic source
    cli.main(["benchmark", "--config", str(write_config(tmp_path, "f.json", out="bf", methods=["ols"],
                                                        data={"features": "i/features.csv"}))])
    cli.main(["benchmark", "--config", str(write_config(tmp_path, "g.json", out="bs", methods=["ols"]))])
    assert (tmp_path / "bf" / "summary.csv").read_text() == (tmp_path / "bs" / "summary.csv").read_text()


def test_ingest_reports_rejections(tmp_path):
    code, _ = run(tmp_path, "synth", out="s", data={"synth": {"n_turbines": 2, "n_steps": 300}})
    text = (tmp_path / "s" / "scada.csv").read_text().splitlines()
    text.insert(5, "garbage,line")
    (tmp_path / "s" / "scada.csv").write_text("\n".join(text) + "\n")
    code, _ = run(tmp_path, "ingest", name="i.json", out="i", data={"scada": "s/scada.csv"})
    assert code == 0
    rej = read_rows(tmp_path / "i" / "rejections.csv")
    assert len(rej) == 1 and rej[0]["line"] == "6"


def test_predict_outputs(tmp_path):
    code, out = run(tmp_path, "predict", methods=["persistence", "ols"], modes=["local", "virtual"])
    assert code == 0
    models = sorted(p.name for p in (out / "models").iterdir())
    assert len(models) == 6 and models[0] == "linear_all_local_T1.json"
    rows = read_rows(out / "predictions.csv")
    assert len(rows) == 2 * 2 * 300
    summary_cfg = write_config(tmp_path, "b.json", out="b", methods=["ols"])
    cli.main(["benchmark", "--config", str(summary_cfg)])
    block0 = [r for r in rows if r["method"] == "linear" and r["mode"] == "local" and r["block_id"] == "0"]
    err = sum((float(r["predicted_kw"]) - float(r["observed_kw"])) ** 2 for r in block0) / len(block0)
    ref = float(read_rows(tmp_path / "b" / "blocks.csv")[0]["rmse_kw"])
    assert err ** 0.5 == pytest.approx(ref, abs=1e-5)


def test_module_entry_point(tmp_path):
    path = write_config(tmp_path, methods=["xgboost"])
    res = subprocess.run([sys.executable, "-m", "windpower", "benchmark", "--config", str(path)],
                         capture_output=True, text=True)
    assert res.returncode == cli.EXIT_CONFIG
