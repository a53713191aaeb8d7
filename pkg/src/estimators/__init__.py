from .kernel_iv import (
    IVSample,
    KernelIVSolution,
    kernel_iv_closed_form,
    kernel_iv_k_step,
    kernel_iv_least_squares,
    kernel_iv_objective,
)
from .kernel_vmm import (
    AlphaSchedule,
    GramAssembly,
    VmmConfig,
    VmmSolution,
    assemble,
    k_step_estimate,
    minimize,
    objective,
    objective_gradient,
    representer_supremum,
    representer_value,
)
from .neural_vmm import (
    MinimaxConfig,
    MlpNetwork,
    RegularizerChoice,
    architecture,
    fit_adversary,
    k_step_neural_vmm,
    mlp_backward,
    mlp_forward,
    nvmm_game_value,
    nvmm_gradients,
    train_neural_vmm,
)
from .optimizer import OptimizerConfig, OptimizerResult, QuadraticForm, minimize_objective
from .owgmm import (
    InstrumentBasis,
    OwgmmEstimate,
    gamma_matrix,
    owgmm_estimate,
    owgmm_objective,
    polynomial_basis,
    random_cosine_basis,
    vmm_span_supremum,
    vmm_span_value,
)
