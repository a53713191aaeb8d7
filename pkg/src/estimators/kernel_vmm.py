"""Kernel VMM: closed-form objective over a direct sum of RKHS adversaries.

With residuals stacked as rho(theta)_{(i,k)} at position ``i*m + k``:

    L_{(i,k),(i',k')} = 1{k = k'} K_k(Z_i, Z_i')
    Q(theta)          = (1/n) sum_j v_j v_j^T,   v_j[(i,k)] = K_k(Z_i, Z_j) rho_k(X_j; theta)
    J_n(theta)        = (1/n^2) rho(theta)^T L (Q(theta~) + alpha L)^{-1} L rho(theta)

``A = L (Q + alpha L)^{-1} L`` is formed once per assembly, so every objective
and gradient evaluation afterwards is a matrix-vector product.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg

from ..kernels import KernelSpec, gram_matrix, per_dimension
from ..kernels.kernels import KernelChoice
from ..moments import Dataset, MomentProblem, residual_matrix, stacked_jacobian, stacked_residuals
from ..numerics import CounterRng, SpdFactor, spd_factor, spd_solve, symmetrize
from .optimizer import OptimizerConfig, QuadraticForm, minimize_objective

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlphaSchedule:
    """alpha_n = scale * n ** -exponent"""
    scale: float = 0.1
    exponent: float = 0.4

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("alpha scale must be positive")
        if not 0 < self.exponent < 0.5:
            # outside the o(1) / omega(n^{-1/2}) window the efficiency guarantees lapse
            logger.warning(f"⚠️ alpha exponent {self.exponent} is outside (0, 0.5)")

    def __call__(self, n: int) -> float:
        return self.scale * float(n) ** -self.exponent


@dataclass(frozen=True)
class VmmConfig:
    alpha_schedule: AlphaSchedule = field(default_factory=AlphaSchedule)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    # fixed alpha, bypassing the schedule
    alpha: Optional[float] = None

    def alpha_for(self, n: int) -> float:
        alpha = self.alpha if self.alpha is not None else self.alpha_schedule(n)
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        return alpha

    def to_dict(self) -> dict:
        return {
            'alpha_scale': self.alpha_schedule.scale,
            'alpha_exponent': self.alpha_schedule.exponent,
            'alpha': self.alpha,
            'optimizer': self.optimizer.to_dict(),
        }


@dataclass(eq=False)
class GramAssembly:
    n: int
    m: int
    kernels: List[KernelSpec]
    L: np.ndarray
    Q: np.ndarray
    alpha: float
    factor: SpdFactor
    A: np.ndarray
    theta_prior: np.ndarray

    @property
    def jitter_used(self) -> float:
        return self.factor.jitter_used


@dataclass
class VmmSolution:
    theta: np.ndarray
    objective: float
    grad_norm: float
    converged: bool
    steps: List[int] = field(default_factory=list)
    trace: List[np.ndarray] = field(default_factory=list)
    stage_objectives: List[float] = field(default_factory=list)
    game_values: List[float] = field(default_factory=list)
    alpha: Optional[float] = None
    assembly: Optional[GramAssembly] = field(default=None, repr=False)

    def diagnostics(self) -> dict:
        return {
            'objective': self.objective,
            'grad_norm': self.grad_norm,
            'converged': self.converged,
            'steps': list(self.steps),
            'trace': [list(map(float, t)) for t in self.trace],
            'stage_objectives': list(self.stage_objectives),
            'alpha': self.alpha,
            'jitter_used': None if self.assembly is None else self.assembly.jitter_used,
        }


def block_gram(grams: List[np.ndarray]) -> np.ndarray:
    """L with zero cross-dimension blocks, in the i*m + k ordering"""
    m, n = len(grams), grams[0].shape[0]
    L = np.zeros((n * m, n * m))
    for k, gram in enumerate(grams):
        L[k::m, k::m] = gram
    return L


def weighting_matrix(grams: List[np.ndarray], residuals: np.ndarray) -> np.ndarray:
    """Q at the given (n, m) residuals"""
    n, m = residuals.shape
    sections = np.zeros((n * m, n))
    for k, gram in enumerate(grams):
        sections[k::m, :] = gram * residuals[:, k][None, :]
    return symmetrize(sections @ sections.T / n)


def resolved_grams(problem: MomentProblem, data: Dataset, kernels: KernelChoice):
    specs = [spec.resolve(data.instruments) for spec in per_dimension(kernels, problem.m)]
    return specs, [gram_matrix(spec, data.instruments) for spec in specs]


def assemble(problem: MomentProblem, data: Dataset, kernels: KernelChoice, theta_prior, alpha: float) -> GramAssembly:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    theta_prior = problem.check_theta(theta_prior)
    specs, grams = resolved_grams(problem, data, kernels)
    L = block_gram(grams)
    Q = weighting_matrix(grams, residual_matrix(problem, data, theta_prior))
    factor = spd_factor(Q + alpha * L)
    A = symmetrize(L @ spd_solve(factor, L))
    return GramAssembly(n=data.n, m=problem.m, kernels=specs, L=L, Q=Q, alpha=alpha,
                        factor=factor, A=A, theta_prior=theta_prior)


def objective(asm: GramAssembly, problem: MomentProblem, data: Dataset, theta) -> float:
    rho = stacked_residuals(problem, data, theta)
    return float(rho @ asm.A @ rho) / asm.n ** 2


def objective_gradient(asm: GramAssembly, problem: MomentProblem, data: Dataset, theta) -> np.ndarray:
    rho = stacked_residuals(problem, data, theta)
    jac = stacked_jacobian(problem, data, theta)
    return 2.0 * jac.T @ (asm.A @ rho) / asm.n ** 2


def representer_value(asm: GramAssembly, problem: MomentProblem, data: Dataset, theta, beta) -> float:
    """Inner objective at the adversary f = sum beta_(i,k) K_k(., Z_i) e_k, evaluated through f(Z_j)"""
    beta = np.asarray(beta, dtype=float)
    adversary = (asm.L @ beta).reshape(asm.n, asm.m)
    current = np.sum(adversary * residual_matrix(problem, data, theta), axis=1)
    weighting = np.sum(adversary * residual_matrix(problem, data, asm.theta_prior), axis=1)
    norm_sq = float(beta @ asm.L @ beta)
    return float(np.mean(current) - 0.25 * np.mean(weighting ** 2) - 0.25 * asm.alpha * norm_sq)


def representer_supremum(asm: GramAssembly, problem: MomentProblem, data: Dataset, theta) -> float:
    """Inner supremum at the stationary coefficients beta* = (2/n)(Q + alpha L)^{-1} L rho(theta)"""
    rho = stacked_residuals(problem, data, theta)
    beta = linalg.lstsq(asm.Q + asm.alpha * asm.L, 2.0 / asm.n * (asm.L @ rho))[0]
    return representer_value(asm, problem, data, theta, beta)


def _quadratic(asm: GramAssembly, problem: MomentProblem, data: Dataset) -> QuadraticForm:
    offset = stacked_residuals(problem, data, np.zeros(problem.b))
    jac = stacked_jacobian(problem, data, np.zeros(problem.b))
    weighted_jac = asm.A @ jac
    scale = float(asm.n) ** 2
    return QuadraticForm(
        hessian_half=symmetrize(jac.T @ weighted_jac) / scale,
        linear=weighted_jac.T @ offset / scale,
        constant=float(offset @ asm.A @ offset) / scale,
    )


def minimize_assembled(asm: GramAssembly, problem: MomentProblem, data: Dataset, config: VmmConfig,
                       theta_start=None, rng: Optional[CounterRng] = None) -> VmmSolution:
    def fun(theta):
        rho = stacked_residuals(problem, data, theta)
        weighted = asm.A @ rho
        jac = stacked_jacobian(problem, data, theta)
        return float(rho @ weighted) / asm.n ** 2, 2.0 * jac.T @ weighted / asm.n ** 2

    start = asm.theta_prior if theta_start is None else problem.check_theta(theta_start)
    quadratic = _quadratic(asm, problem, data) if problem.linear else None
    result = minimize_objective(fun, start, config.optimizer, rng=rng, quadratic=quadratic)
    return VmmSolution(theta=result.theta, objective=result.value, grad_norm=result.grad_norm,
                       converged=result.converged, steps=[result.iterations], trace=[result.theta],
                       stage_objectives=[result.value], alpha=asm.alpha, assembly=asm)


def minimize(problem: MomentProblem, data: Dataset, kernels: KernelChoice, theta_prior,
             config: Optional[VmmConfig] = None, theta_start=None,
             rng: Optional[CounterRng] = None) -> VmmSolution:
    """argmin_theta J_n(theta) with the weighting built at ``theta_prior``"""
    config = config or VmmConfig()
    asm = assemble(problem, data, kernels, theta_prior, config.alpha_for(data.n))
    return minimize_assembled(asm, problem, data, config, theta_start=theta_start, rng=rng)


def k_step_estimate(problem: MomentProblem, data: Dataset, kernels: KernelChoice, k: int, theta0_init,
                    config: Optional[VmmConfig] = None, rng: Optional[CounterRng] = None) -> VmmSolution:
    """Stage j re-weights at stage j-1's estimate; stage 1 uses the fixed ``theta0_init``"""
    if k < 1:
        raise ValueError("k must be at least 1")
    config = config or VmmConfig()
    prior = problem.check_theta(theta0_init)
    steps, trace, objectives, solution = [], [], [], None
    for stage in range(k):
        solution = minimize(problem, data, kernels, prior, config, theta_start=prior, rng=rng)
        logger.debug(f"kernel VMM stage {stage + 1}/{k}: theta={solution.theta}, J={solution.objective:.6e}")
        steps.extend(solution.steps)
        trace.extend(solution.trace)
        objectives.extend(solution.stage_objectives)
        prior = solution.theta
    solution.steps, solution.trace, solution.stage_objectives = steps, trace, objectives
    return solution
