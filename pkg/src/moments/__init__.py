from .dataset import Dataset, RecordLayout
from .problems import (
    DensityRatioProblem,
    LinearIVProblem,
    MomentProblem,
    PinnedProblem,
    PolicySurrogateProblem,
    PolynomialStateBasis,
    QuantileIVProblem,
    SmoothingConfig,
    StackedProblem,
    TabularPolicy,
    density_ratio_problem,
    linear_iv_problem,
    normalize_density_ratio,
    pin_parameter,
    policy_surrogate_problem,
    quantile_iv_problem,
    residual_matrix,
    stack_problems,
    stacked_jacobian,
    stacked_residuals,
)

__all__ = [
    'Dataset', 'RecordLayout', 'DensityRatioProblem', 'LinearIVProblem', 'MomentProblem',
    'PinnedProblem', 'PolicySurrogateProblem', 'PolynomialStateBasis', 'QuantileIVProblem',
    'SmoothingConfig', 'StackedProblem', 'TabularPolicy', 'density_ratio_problem', 'linear_iv_problem',
    'normalize_density_ratio', 'pin_parameter', 'policy_surrogate_problem', 'quantile_iv_problem',
    'residual_matrix', 'stack_problems', 'stacked_jacobian', 'stacked_residuals',
]
