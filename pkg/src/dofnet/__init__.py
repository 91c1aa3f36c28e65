"""Effective complexity of single-hidden-layer networks with binary outcomes."""
from .complexity import (
    ComplexityEstimate,
    ConstantMeanProcedure,
    EstimationError,
    FFNNProcedure,
    IdentityProcedure,
    ModelingProcedure,
    cv_loglik,
    flip_sweep,
    gdf_horizontal,
    gdf_vertical,
    lrt_statistic,
    null_dof,
    p_cv,
    stratified_folds,
)
from .datagen import Scenario, ScenarioSpec, TrueModelSpec, gen_intercept_only, gen_scenario, gen_true_model
from .ffnn import Criterion, Dataset, FitError, FitResult, ModelConfig, ParamVector, fit

__version__ = "0.1.0"
