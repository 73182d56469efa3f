"""The cubic power law, the Betz envelope and what a fitted model learns.

Prints a coarse table; ``windpower plotdata`` writes the full CSVs for plotting.
"""
import numpy as np

from windpower import Scenario, TurbinePhysics, WindProcess, fit_sigmoid, theoretical_power
from windpower.parametric import SigmoidVariant
from windpower.pipeline import farm_from_records
from windpower.synth import BETZ_LIMIT

physics = TurbinePhysics()
betz = TurbinePhysics(cp=BETZ_LIMIT, rated_power=1e9)

farm = farm_from_records([r for t in Scenario(n_turbines=1, n_steps=6000, wind=WindProcess(seed=3)).simulate()
                          for r in t])
w, y = farm.X[0, :, :1], farm.y[0]
model, _ = fit_sigmoid(w, y, SigmoidVariant.POLYNOMIAL_LOGISTIC, "wind")

print(f"{'w (m/s)':>8}{'Betz':>10}{'cp=0.45':>10}{'clipped':>10}{'fitted':>10}")
for speed in np.arange(2.0, 24.1, 2.0):
    print(f"{speed:8.1f}{theoretical_power(betz, speed, clip=False):10.0f}"
          f"{theoretical_power(physics, speed, clip=False):10.0f}{theoretical_power(physics, speed):10.0f}"
          f"{model.predict(np.array([[speed]]))[0]:10.0f}")
