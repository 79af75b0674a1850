"""Calibration of dichotomous test data under four latent-trait models:
the one-parameter (Rasch) model, both two-parameter variants (item or
person discrimination), and a three-parameter model with simultaneous
person and item discrimination, under logistic or normal-ogive links.
"""

from .model import (
    Link,
    ModelKind,
    ModelSpec,
    ParameterSet,
    ResponseMatrix,
    combined_discrimination,
    logistic,
    normal_cdf,
    success_probability,
)
from .estimation import (
    EstimationConfig,
    ExtremeScorePolicy,
    FitResult,
    estimate,
    estimate_rasch,
    log_likelihood,
    loglik_gradient,
)
from .analysis import (
    ComparisonReport,
    compare_models,
    fisher_z,
    pearson_r,
    ranked_table,
    standardize,
    z_sigma,
)
from .ctt import clean_test, ctt_report, item_difficulty, \
    item_total_correlation, person_total_correlation
from .simulation import SimulationScenario, make_scenario, \
    sample_population, simulate

__all__ = [name for name in dir() if not name.startswith("_")]
