"""Statistical learning of wind farm power from turbine sensor data.

Submodules
----------
pipeline    SCADA parsing, 30-minute features, virtual sensors, standardization
parametric  OLS, scaled-sigmoid regressions, LASSO
tree        CART with deviance splits and cost-complexity pruning
forest      bagging and random forests
neighbors   kNN regression and epsilon-SVR
evaluation  per-turbine fits, farm sums, block RMSE reports
synth       synthetic farms from the cubic power law
cli         command-line driver
"""
from .evaluation import (EvalReport, FarmModel, MethodSpec, PowerCurve, SplitPlan, evaluate, farm_predict, fit_farm,
                         make_split_plan, pct_installed_power, persistence_predict, power_curve_predict, rmse)
from .forest import Forest, fit_bagging, fit_forest, predict_forest
from .neighbors import KnnModel, SvrModel, calibrate_svr, fit_knn, fit_svr, predict_knn, select_k
from .parametric import FitReport, LinearModel, SigmoidModel, SigmoidVariant, fit_lasso, fit_ols, fit_sigmoid, predict
from .pipeline import (FarmData, FeatureRow, FeatureSet, RawRecord, StandardizationStats, TurbineDataset,
                       TurbineState, aggregate_30min, apply_stats, circular_mean, compute_stats, filter_operational,
                       parse_scada, virtual_sensor_average)
from .synth import Scenario, TurbinePhysics, WindProcess, simulate_farm, simulate_turbine, theoretical_power
from .tree import RegressionTree, best_split, grow_tree, prune_tree

__version__ = "0.1.0"
