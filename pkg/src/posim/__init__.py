"""Simulation of near-positivity violations in marginal structural models.

Two longitudinal data-generating mechanisms with a tunable positivity
violation, stabilized IPT weights with percentile truncation, pooled logistic
and Aalen additive MSM fits, simulation-based truth, and a Monte Carlo
harness for bias, empirical SE and RMSE.
"""
from .posviol import PositivityPolicy, Region, is_forced
from .genmodel_one import StudyOneParams, simulate_dataset_one
from .genmodel_two import StudyTwoParams, simulate_dataset_two
from .weights import TruncationStrategy, estimate_weights_one, estimate_weights_two, truncate_weights
from .estimators import GForm, fit_aalen_msm, fit_logit_msm, survival_aalen, survival_logit
from .truth import compute_truth_two, true_params_one
from .harness import ScenarioConfig, make_scenario, run_study

__version__ = "0.1.0"
