from .conditional import (
    ConditionalConfig,
    ConditionalRegressor,
    conditional_jacobian,
    conditional_variance,
    fit_conditional,
    omega0_plug_in,
    scott_bandwidth,
)
from .covariance import (
    InferenceReport,
    efficient_covariance,
    gmm_covariance,
    sandwich_covariance,
    wald_intervals,
)
