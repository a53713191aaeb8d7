"""Asymptotic covariance plug-ins and Wald intervals.

The kernel VMM sandwich lives in the representer basis of the assembly:

    G     = (1/n) L Jac(theta^)          (nm x b)
    W     = (Q(theta~) + alpha L)^{-1}
    Omega = G^T W Q(theta~) W G
    Delta = G^T W Q(theta^) W G
    cov   = Omega^{-1} Delta Omega^{-1} / n
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg
from scipy.stats import norm

from ..estimators.kernel_vmm import GramAssembly, resolved_grams, weighting_matrix
from ..estimators.owgmm import InstrumentBasis, moment_jacobian
from ..moments import Dataset, MomentProblem, residual_matrix, stacked_jacobian
from ..numerics import spd_factor, spd_inverse, spd_solve, symmetrize
from .conditional import ConditionalConfig, ConditionalOracle, omega0_plug_in

logger = logging.getLogger(__name__)

CONDITION_FLOOR = 1e-10


@dataclass
class InferenceReport:
    method: str
    theta: np.ndarray
    n: int
    omega: np.ndarray
    covariance: np.ndarray
    standard_errors: np.ndarray
    intervals: np.ndarray
    significance: float = 0.05
    delta: Optional[np.ndarray] = None
    efficient: bool = False
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            'method': self.method,
            'n': self.n,
            'efficient': self.efficient,
            'confidence_level': 1.0 - self.significance,
            'omega': self.omega.tolist(),
            'delta': None if self.delta is None else self.delta.tolist(),
            'covariance': self.covariance.tolist(),
            'standard_errors': self.standard_errors.tolist(),
            'intervals': self.intervals.tolist(),
            'warnings': list(self.warnings),
        }


def wald_intervals(theta, covariance, significance: float = 0.05) -> np.ndarray:
    """(b, 2) array of theta_i -/+ z_{1 - significance/2} sqrt(cov_ii)"""
    if not 0 < significance < 1:
        raise ValueError("significance must lie in (0, 1)")
    theta = np.asarray(theta, dtype=float).reshape(-1)
    half = norm.ppf(1.0 - significance / 2.0) * np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    return np.column_stack([theta - half, theta + half])


def _inverted(omega: np.ndarray, warnings: List[str]) -> np.ndarray:
    omega = symmetrize(omega)
    eigenvalues = linalg.eigvalsh(omega)
    top = float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 0.0
    if top == 0.0 or float(np.min(eigenvalues)) < CONDITION_FLOOR * top:
        warnings.append(f"Omega is numerically singular (eigenvalues {eigenvalues.min():.3e} .. {eigenvalues.max():.3e}); "
                        "parameters may be unidentified")
    factor = spd_factor(omega)
    if factor.jitter_used > 0:
        warnings.append(f"Omega needed jitter {factor.jitter_used:.3e} to invert")
    return spd_inverse(factor)


def _report(method, theta, n, omega, covariance, significance, delta=None, efficient=False, warnings=None):
    covariance = symmetrize(covariance)
    for message in warnings or []:
        logger.warning(f"⚠️ {method}: {message}")
    return InferenceReport(
        method=method, theta=np.asarray(theta, dtype=float), n=n, omega=symmetrize(omega),
        covariance=covariance,
        standard_errors=np.sqrt(np.clip(np.diag(covariance) * n, 0.0, None)),
        intervals=wald_intervals(theta, covariance, significance),
        significance=significance, delta=None if delta is None else symmetrize(delta),
        efficient=efficient, warnings=list(warnings or []),
    )


def sandwich_covariance(asm: GramAssembly, problem: MomentProblem, data: Dataset, theta_hat,
                        theta_prior=None, significance: float = 0.05) -> InferenceReport:
    """Omega^{-1} Delta Omega^{-1} / n; collapses to the efficient form when the prior is theta^

    Omega and Delta share the W-sandwich; Delta equals Omega exactly when the
    prior is theta^.
    """
    theta_hat = problem.check_theta(theta_hat)
    theta_prior = asm.theta_prior if theta_prior is None else problem.check_theta(theta_prior)
    n = data.n
    G = asm.L @ stacked_jacobian(problem, data, theta_hat) / n
    WG = spd_solve(asm.factor, G)

    _, grams = resolved_grams(problem, data, asm.kernels)
    Q_prior = asm.Q if np.array_equal(theta_prior, asm.theta_prior) else \
        weighting_matrix(grams, residual_matrix(problem, data, theta_prior))
    Q_hat = weighting_matrix(grams, residual_matrix(problem, data, theta_hat))
    omega = symmetrize(WG.T @ Q_prior @ WG)
    delta = symmetrize(WG.T @ Q_hat @ WG)

    warnings: List[str] = []
    if asm.jitter_used > 0:
        warnings.append(f"Q + alpha L needed jitter {asm.jitter_used:.3e}")
    omega_inv = _inverted(omega, warnings)
    covariance = omega_inv @ delta @ omega_inv / n
    efficient = bool(np.array_equal(theta_prior, theta_hat))
    return _report('sandwich', theta_hat, n, omega, covariance, significance,
                   delta=delta, efficient=efficient, warnings=warnings)


def efficient_covariance(problem: MomentProblem, data: Dataset, theta_hat, significance: float = 0.05,
                         config: Optional[ConditionalConfig] = None,
                         oracle_jacobian: Optional[ConditionalOracle] = None,
                         oracle_variance: Optional[ConditionalOracle] = None) -> InferenceReport:
    """Omega0^{-1} / n from the conditional-moment plug-in"""
    theta_hat = problem.check_theta(theta_hat)
    omega0 = omega0_plug_in(problem, data, theta_hat, config, oracle_jacobian, oracle_variance)
    warnings: List[str] = []
    covariance = _inverted(omega0, warnings) / data.n
    return _report('efficient', theta_hat, data.n, omega0, covariance, significance,
                   efficient=True, warnings=warnings)


def gmm_covariance(basis: InstrumentBasis, problem: MomentProblem, data: Dataset, theta_hat, gamma,
                   significance: float = 0.05) -> InferenceReport:
    """(G^T Gamma^{-1} G)^{-1} / n with G = E_n[f(Z)^T rho'(X; theta^)]"""
    theta_hat = problem.check_theta(theta_hat)
    G = moment_jacobian(basis, problem, data, theta_hat)
    omega = symmetrize(G.T @ spd_solve(spd_factor(gamma), G))
    warnings: List[str] = []
    covariance = _inverted(omega, warnings) / data.n
    return _report('gmm', theta_hat, data.n, omega, covariance, significance, warnings=warnings)
