"""A small end-to-end tour: synthetic SCADA data in, a ranked method table out.

Run with ``python demos/quickstart.py``. Takes well under a minute.
"""
import io

from windpower import MethodSpec, Scenario, WindProcess, evaluate, make_split_plan
from windpower.evaluation import format_table
from windpower.pipeline import farm_from_records, parse_scada, write_scada

# Three turbines, about five weeks of 10-minute records.
scenario = Scenario(n_turbines=3, n_steps=5000, wind=WindProcess(seed=1))
records = [r for turbine in scenario.simulate() for r in turbine]

# Round-trip through the CSV format so the parser and its rejection report are exercised.
buf = io.StringIO()
write_scada(buf, records)
parsed = parse_scada(buf.getvalue())
print(f"parsed {len(parsed.records)} records, rejected {parsed.n_rejected}")

# Filter to full operation, aggregate to 30-minute features and align the turbines.
farm = farm_from_records(parsed.records)
print(f"{farm.n_turbines} turbines x {len(farm)} aligned 30-minute instants")

# Train on the first 800 instants, score the farm total on three later blocks.
plan = make_split_plan(len(farm), 700, 3, 150)
specs = [
    MethodSpec("persistence"),
    MethodSpec("linear", "wind"),
    MethodSpec("polylogistic", "wind"),
    MethodSpec("cart", "all"),
    MethodSpec("bagging", "all", {"b": 30}),
    MethodSpec("knn", "all"),
]
reports = [evaluate(spec, farm, plan, seed=1) for spec in specs]
print()
print(format_table(reports, ranked=True))
