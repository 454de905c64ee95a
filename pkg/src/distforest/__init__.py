"""Distributional regression trees and forests for zero-censored responses.

The main entry points::

    from distforest import CensoredNormal, ForestConfig, grow_forest
    forest = grow_forest(dataset, CensoredNormal(), ForestConfig(ntree=100, seed=1))
    theta = forest.predict(X_new)          # ParamVector of (mu, sigma) arrays
"""
from .baselines import EmosModel, fit_emos, fit_intercept, predict_emos
from .data import Dataset, Schema, SyntheticScenario, generate, load, power_transform, read_scenario, save
from .evaluation import (
    cross_validate,
    crpss,
    evaluate,
    make_cv_plan,
    mean_crps,
    quantile_residuals,
    variable_importance,
)
from .exceptions import (
    ArchiveVersionError,
    ConvergenceError,
    DataError,
    DegenerateSampleError,
    DistForestError,
    DomainError,
    InvalidParameterError,
    NoAdmissibleSplitError,
    SchemaError,
)
from .families import CensoredLogistic, CensoredNormal, ParamVector, Predictive, get_family
from .forest import DistForest, ForestConfig, forest_weights, grow_forest
from .mle import WeightedSample, fit, fit_from_weights
from .models import RunConfig, fit_model
from .tree import DistTree, TreeConfig, grow, test_association, tree_weights

__version__ = "0.1.0"
