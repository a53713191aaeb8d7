"""Optimally weighted GMM over a finite instrument basis, and its variational form."""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import linalg

from ..errors import DegenerateInstrument, DimensionMismatch
from ..moments import Dataset, MomentProblem, residual_matrix
from ..numerics import CounterRng, spd_factor, spd_solve, symmetrize
from .optimizer import OptimizerConfig, OptimizerResult, QuadraticForm, minimize_objective

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Monomial:
    """z -> z[index] ** power, times ``scale``"""
    index: int
    power: int
    scale: float = 1.0

    def __call__(self, zs: np.ndarray) -> np.ndarray:
        return self.scale * zs[:, self.index] ** self.power


@dataclass(frozen=True)
class CosineFeature:
    """z -> scale * cos(w^T z + shift)"""
    weights: tuple
    shift: float
    scale: float = 1.0

    def __call__(self, zs: np.ndarray) -> np.ndarray:
        return self.scale * np.cos(zs @ np.asarray(self.weights, dtype=float) + self.shift)


@dataclass(frozen=True)
class InstrumentBasis:
    """k instrument functions f_i: R^{d_z} -> R^m, each evaluated on an (n, d_z) block.

    A function may return an (n,) array, which is used for every residual
    dimension, or an (n, m) array.
    """
    functions: tuple

    @property
    def k(self) -> int:
        return len(self.functions)

    def evaluate(self, instruments: np.ndarray, m: int) -> np.ndarray:
        """(n, k, m) array of f_i(z_n)"""
        columns = []
        for f in self.functions:
            values = np.asarray(f(instruments), dtype=float)
            if values.ndim == 1:
                values = np.repeat(values[:, None], m, axis=1)
            if values.shape != (instruments.shape[0], m):
                raise DimensionMismatch(f"instrument returned shape {values.shape}, expected ({instruments.shape[0]}, {m})")
            columns.append(values)
        return np.stack(columns, axis=1)

    def scaled(self, factor: float) -> 'InstrumentBasis':
        return InstrumentBasis(tuple(_Scaled(f, factor) for f in self.functions))


@dataclass(frozen=True)
class _Scaled:
    inner: Callable
    factor: float

    def __call__(self, zs):
        return self.factor * np.asarray(self.inner(zs), dtype=float)


def polynomial_basis(instrument_dim: int, degree: int) -> InstrumentBasis:
    """Constant plus powers 1..degree of every instrument coordinate"""
    functions = [Monomial(0, 0)]
    for power in range(1, degree + 1):
        functions.extend(Monomial(i, power) for i in range(instrument_dim))
    return InstrumentBasis(tuple(functions))


def random_cosine_basis(rng: CounterRng, k: int, instrument_dim: int) -> InstrumentBasis:
    return InstrumentBasis(tuple(
        CosineFeature(tuple(rng.normal(instrument_dim)), rng.uniform(low=0.0, high=2 * np.pi))
        for _ in range(k)
    ))


@dataclass
class OwgmmEstimate:
    theta: np.ndarray
    gamma: np.ndarray
    objective: float
    optimizer: OptimizerResult
    stage_thetas: List[np.ndarray] = field(default_factory=list)


def evaluated_instruments(basis: InstrumentBasis, problem: MomentProblem, data: Dataset) -> np.ndarray:
    values = basis.evaluate(data.instruments, problem.m)
    dead = [i for i in range(basis.k) if not np.any(values[:, i, :])]
    if dead:
        raise DegenerateInstrument(f"instrument(s) {dead} vanish on every observation")
    return values


def _projected(values: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    """(n, k) array of f_i(Z_n)^T rho_n"""
    return np.einsum('nim,nm->ni', values, residuals)


def empirical_moments(basis, problem, data, theta, values: Optional[np.ndarray] = None) -> np.ndarray:
    """g_i(theta) = E_n[f_i(Z)^T rho(X; theta)]"""
    values = evaluated_instruments(basis, problem, data) if values is None else values
    return _projected(values, residual_matrix(problem, data, theta)).mean(axis=0)


def moment_jacobian(basis, problem, data, theta, values: Optional[np.ndarray] = None) -> np.ndarray:
    """(k, b) derivative of the empirical moments, E_n[f_i(Z)^T rho'(X; theta)]"""
    values = evaluated_instruments(basis, problem, data) if values is None else values
    jac = problem.jacobian(data.records, problem.check_theta(theta))
    return np.einsum('nim,nmb->ib', values, jac) / data.n


def gamma_matrix(basis: InstrumentBasis, problem: MomentProblem, data: Dataset, theta_prior) -> np.ndarray:
    """Gamma_ij = E_n[f_i(Z)^T rho(X; theta~) rho(X; theta~)^T f_j(Z)]"""
    projected = _projected(evaluated_instruments(basis, problem, data), residual_matrix(problem, data, theta_prior))
    return symmetrize(projected.T @ projected / data.n)


def owgmm_objective(basis, problem, data, theta, gamma) -> float:
    """g(theta)^T Gamma^{-1} g(theta)"""
    g = empirical_moments(basis, problem, data, theta)
    return float(g @ spd_solve(spd_factor(gamma), g))


def vmm_span_value(basis, problem, data, theta, theta_prior, v) -> float:
    """E_n[(F^T v)^T rho(theta)] - 1/4 E_n[((F^T v)^T rho(theta~))^2] evaluated sample by sample"""
    values = evaluated_instruments(basis, problem, data)
    adversary = np.einsum('nim,i->nm', values, np.asarray(v, dtype=float))
    current = np.sum(adversary * residual_matrix(problem, data, theta), axis=1)
    weighting = np.sum(adversary * residual_matrix(problem, data, theta_prior), axis=1)
    return float(np.mean(current) - 0.25 * np.mean(weighting ** 2))


def vmm_span_supremum(basis, problem, data, theta, theta_prior) -> float:
    """Supremum of :func:`vmm_span_value` over v, reached at v* = 2 Gamma^{-1} g"""
    gamma = gamma_matrix(basis, problem, data, theta_prior)
    g = empirical_moments(basis, problem, data, theta)
    v_star = linalg.lstsq(gamma, 2.0 * g)[0]
    return vmm_span_value(basis, problem, data, theta, theta_prior, v_star)


def _stage(basis, problem, data, values, gamma, theta_start, opt_config, rng) -> OptimizerResult:
    factor = spd_factor(gamma)

    def fun(theta):
        g = _projected(values, residual_matrix(problem, data, theta)).mean(axis=0)
        jac = moment_jacobian(basis, problem, data, theta, values)
        weighted = spd_solve(factor, g)
        return float(g @ weighted), 2.0 * jac.T @ weighted

    quadratic = None
    if problem.linear:
        zero = np.zeros(problem.b)
        g0 = _projected(values, residual_matrix(problem, data, zero)).mean(axis=0)
        jac = moment_jacobian(basis, problem, data, zero, values)
        weighted_jac = spd_solve(factor, jac)
        quadratic = QuadraticForm(
            hessian_half=symmetrize(jac.T @ weighted_jac),
            linear=weighted_jac.T @ g0,
            constant=float(g0 @ spd_solve(factor, g0)),
        )
    return minimize_objective(fun, theta_start, opt_config, rng=rng, quadratic=quadratic)


def owgmm_estimate(basis: InstrumentBasis, problem: MomentProblem, data: Dataset, theta_prior,
                   opt_config: Optional[OptimizerConfig] = None, steps: int = 1,
                   initial_weighting: str = 'prior', rng: Optional[CounterRng] = None) -> OwgmmEstimate:
    """Minimizes the Gamma-weighted moment norm, re-weighting ``steps`` times.

    ``steps=2`` is two-step GMM: the second stage recomputes Gamma at the
    first-stage estimate. ``initial_weighting='identity'`` uses Gamma = I in
    the first stage.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if initial_weighting not in ('prior', 'identity'):
        raise ValueError("initial_weighting must be 'prior' or 'identity'")
    opt_config = opt_config or OptimizerConfig()
    values = evaluated_instruments(basis, problem, data)
    prior = problem.check_theta(theta_prior)
    stage_thetas, result, gamma = [], None, None

    for stage in range(steps):
        if stage == 0 and initial_weighting == 'identity':
            gamma = np.eye(basis.k)
        else:
            gamma = gamma_matrix(basis, problem, data, prior)
        result = _stage(basis, problem, data, values, gamma, prior, opt_config, rng)
        logger.debug(f"OWGMM stage {stage + 1}/{steps}: theta={result.theta}, objective={result.value:.6e}")
        stage_thetas.append(result.theta)
        prior = result.theta

    return OwgmmEstimate(theta=result.theta, gamma=gamma, objective=result.value,
                         optimizer=result, stage_thetas=stage_thetas)
