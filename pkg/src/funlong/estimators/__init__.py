from funlong.estimators.estimate import (
    EstimateReport,
    FittedHProcess,
    dr_estimate,
    fit_h_process,
    gcomp_estimate,
    ipw_estimate,
    xi_out,
    xi_trt,
)
from funlong.estimators.features import FeatureSpec
from funlong.estimators.nuisance import (
    CensoringModel,
    CtmcGridPropensity,
    DiffusionGridPropensity,
    DiscreteTrueCensoring,
    DiscreteTruePropensity,
    FittedCensoring,
    FittedPropensity,
    PropensityModel,
    TrivialCensoring,
    fit_censoring,
    fit_propensity,
)
from funlong.estimators.regression import ExactFiniteState, LeastSquaresBasis, OutcomeRegressionBackend
from funlong.estimators.weights import ModelQProcess, ipw_weight_path, weight_columns
