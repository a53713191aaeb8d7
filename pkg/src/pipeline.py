"""Estimator selection: one entry point from a problem and a dataset to theta^ and its inference."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError
from .estimators import (
    IVSample,
    MinimaxConfig,
    RegularizerChoice,
    VmmConfig,
    k_step_estimate,
    k_step_neural_vmm,
    kernel_iv_k_step,
    kernel_iv_objective,
    owgmm_estimate,
    polynomial_basis,
)
from .inference import ConditionalConfig, InferenceReport, efficient_covariance, gmm_covariance, sandwich_covariance
from .kernels import KernelSpec
from .moments import (
    Dataset,
    DensityRatioProblem,
    MomentProblem,
    normalize_density_ratio,
    pin_parameter,
    residual_matrix,
)
from .numerics import CounterRng

logger = logging.getLogger(__name__)

ESTIMATORS = ('owgmm', 'kernel-vmm', 'kernel-iv', 'neural-vmm')
INFERENCE_METHODS = ('sandwich', 'efficient', 'gmm', 'none')


@dataclass(frozen=True)
class EstimatorConfig:
    name: str = 'kernel-vmm'
    k: int = 2
    kernel: KernelSpec = field(default_factory=KernelSpec)
    vmm: VmmConfig = field(default_factory=VmmConfig)
    # kernel IV
    kernel_g: KernelSpec = field(default_factory=lambda: KernelSpec(kind='linear'))
    lam: float = 1e-6
    # OWGMM
    basis_degree: int = 1
    owgmm_steps: int = 2
    # neural VMM
    minimax: MinimaxConfig = field(default_factory=MinimaxConfig)
    regularizer: RegularizerChoice = field(default_factory=RegularizerChoice)
    # 0-step prior; zeros when unset
    theta_init: Optional[Tuple[float, ...]] = None
    # (index, value) removing the scale of homogeneous problems
    pin: Optional[Tuple[int, float]] = None
    inference: str = 'sandwich'
    significance: float = 0.05
    conditional: ConditionalConfig = field(default_factory=ConditionalConfig)
    label: Optional[str] = None

    def __post_init__(self):
        if self.name not in ESTIMATORS:
            raise ConfigError(f"unknown estimator '{self.name}', expected one of {ESTIMATORS}")
        if self.inference not in INFERENCE_METHODS:
            raise ConfigError(f"unknown inference method '{self.inference}', expected one of {INFERENCE_METHODS}")
        if self.k < 1 or self.owgmm_steps < 1 or self.basis_degree < 1:
            raise ConfigError("k, owgmm_steps and basis_degree must be at least 1")
        if self.lam < 0:
            raise ConfigError("lam must be non-negative")
        if not 0 < self.significance < 1:
            raise ConfigError("significance must lie in (0, 1)")

    @property
    def display_name(self) -> str:
        return self.label or f"{self.name}(k={self.k})"


@dataclass
class FitResult:
    theta: np.ndarray
    objective: float
    residuals: np.ndarray
    report: Optional[InferenceReport] = None
    diagnostics: dict = field(default_factory=dict)


def _theta_init(problem: MomentProblem, config: EstimatorConfig) -> np.ndarray:
    if config.theta_init is None:
        return np.zeros(problem.b)
    return problem.check_theta(config.theta_init)


def _fit_kernel_vmm(problem, data, config: EstimatorConfig, rng):
    solution = k_step_estimate(problem, data, config.kernel, config.k, _theta_init(problem, config),
                               config.vmm, rng=rng)
    report = None
    if config.inference == 'sandwich':
        report = sandwich_covariance(solution.assembly, problem, data, solution.theta,
                                     significance=config.significance)
    elif config.inference == 'efficient':
        report = efficient_covariance(problem, data, solution.theta, config.significance, config.conditional)
    return solution.theta, solution.objective, report, solution.diagnostics()


def _fit_owgmm(problem, data, config: EstimatorConfig, rng):
    basis = polynomial_basis(data.instrument_dim, config.basis_degree)
    estimate = owgmm_estimate(basis, problem, data, _theta_init(problem, config), config.vmm.optimizer,
                              steps=config.owgmm_steps, rng=rng)
    report = None
    if config.inference in ('gmm', 'sandwich'):
        report = gmm_covariance(basis, problem, data, estimate.theta, estimate.gamma, config.significance)
    elif config.inference == 'efficient':
        report = efficient_covariance(problem, data, estimate.theta, config.significance, config.conditional)
    diagnostics = {
        'objective': estimate.objective, 'grad_norm': estimate.optimizer.grad_norm,
        'converged': estimate.optimizer.converged, 'basis_size': basis.k,
        'trace': [list(map(float, t)) for t in estimate.stage_thetas],
    }
    return estimate.theta, estimate.objective, report, diagnostics


def _fit_neural_vmm(problem, data, config: EstimatorConfig, rng):
    solution = k_step_neural_vmm(problem, data, config.k, _theta_init(problem, config), config.regularizer,
                                 config.minimax)
    report = None
    if config.inference != 'none':
        report = efficient_covariance(problem, data, solution.theta, config.significance, config.conditional)
    diagnostics = solution.diagnostics()
    diagnostics['final_game_value'] = solution.game_values[-1] if solution.game_values else None
    return solution.theta, solution.objective, report, diagnostics


def _fit_kernel_iv(problem, data, config: EstimatorConfig):
    if problem.m != 1 or not {'z', 't', 'y'} <= set(problem.layout.roles):
        raise ConfigError("kernel-iv needs a single-residual problem with z, t and y columns")
    sample = IVSample.from_dataset(problem, data)
    alpha = config.vmm.alpha_for(data.n)
    stages = kernel_iv_k_step(sample, config.kernel, config.kernel_g, config.k, alpha, config.lam)
    solution = stages[-1]
    fitted = solution.predict(sample.t)
    diagnostics = {
        'beta': solution.beta.tolist(), 'alpha': alpha, 'lam': config.lam,
        'jitter_used': solution.jitter_used, 'stages': len(stages),
    }
    if config.kernel_g.kind == 'linear':
        theta = sample.t.T @ solution.beta
    else:
        theta = np.zeros(0)
        diagnostics['fitted_values'] = fitted.tolist()
    return theta, kernel_iv_objective(solution, sample), (sample.y - fitted)[:, None], diagnostics


def fit_estimator(problem: MomentProblem, data: Dataset, config: EstimatorConfig,
                  rng: Optional[CounterRng] = None) -> FitResult:
    """Runs the configured estimator; scale-free problems are pinned then renormalized"""
    rng = rng or CounterRng(0)
    if config.name == 'kernel-iv':
        theta, value, residuals, diagnostics = _fit_kernel_iv(problem, data, config)
        return FitResult(theta=theta, objective=value, residuals=residuals, diagnostics=diagnostics)

    pin = config.pin
    if pin is None and isinstance(problem, DensityRatioProblem):
        pin = (0, 1.0)
    target = pin_parameter(problem, pin[0], pin[1]) if pin is not None else problem

    if config.name == 'kernel-vmm':
        theta, value, report, diagnostics = _fit_kernel_vmm(target, data, config, rng)
    elif config.name == 'owgmm':
        theta, value, report, diagnostics = _fit_owgmm(target, data, config, rng)
    else:
        theta, value, report, diagnostics = _fit_neural_vmm(target, data, config, rng)

    if pin is not None:
        theta = target.expand(theta)
        if isinstance(problem, DensityRatioProblem):
            theta = normalize_density_ratio(problem, data, theta)
        if report is not None:
            diagnostics['inference_note'] = f"intervals cover the free coordinates of {target.name}"
        diagnostics['pinned'] = {'index': pin[0], 'value': pin[1]}
    return FitResult(theta=theta, objective=value, residuals=residual_matrix(problem, data, theta),
                     report=report, diagnostics=diagnostics)
