"""Closed-form kernel IV: nonparametric g(t) = sum_i beta_i K_g(t, T_i) with an RKHS ridge.

    Q    = (1/n) L_f diag((Y - g~(T))^2) L_f
    M    = (1/n^2) L_f (Q + alpha L_f)^{-1} L_f
    beta = (L_g M L_g + lam L_g)^{-1} L_g M Y
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy import linalg

from ..errors import DimensionMismatch
from ..kernels import KernelSpec, cross_gram, gram_matrix
from ..moments import Dataset, MomentProblem
from ..numerics import spd_factor, spd_solve, symmetrize

logger = logging.getLogger(__name__)

Predictor = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class IVSample:
    z: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if not (self.z.shape[0] == self.t.shape[0] == self.y.shape[0]):
            raise DimensionMismatch("z, t and y must have the same number of rows")

    @classmethod
    def from_arrays(cls, z, t, y) -> 'IVSample':
        def points(a):
            a = np.asarray(a, dtype=float)
            return a[:, None] if a.ndim == 1 else a
        return cls(z=points(z), t=points(t), y=np.asarray(y, dtype=float).reshape(-1))

    @classmethod
    def from_dataset(cls, problem: MomentProblem, data: Dataset) -> 'IVSample':
        layout = problem.layout
        return cls.from_arrays(layout.columns(data.records, 'z'), layout.columns(data.records, 't'),
                               layout.column(data.records, 'y'))

    @property
    def n(self) -> int:
        return self.y.shape[0]


@dataclass(eq=False)
class KernelIVSolution:
    beta: np.ndarray
    t_train: np.ndarray
    kernel_g: KernelSpec
    kernel_f: KernelSpec
    M: np.ndarray = field(repr=False)
    alpha: float
    lam: float
    jitter_used: float = 0.0

    def predict(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return cross_gram(self.kernel_g, t[:, None] if t.ndim == 1 else t, self.t_train) @ self.beta

    def __call__(self, t) -> np.ndarray:
        return self.predict(t)


def _prior_values(theta_prior: Optional[Predictor], t: np.ndarray) -> np.ndarray:
    if theta_prior is None:
        return np.zeros(t.shape[0])
    values = np.asarray(theta_prior(t), dtype=float).reshape(-1)
    if values.shape[0] != t.shape[0]:
        raise DimensionMismatch(f"prior predictor returned {values.shape[0]} values for {t.shape[0]} points")
    return values


def weighting_operator(gram_f: np.ndarray, residuals: np.ndarray, alpha: float):
    """M and the jitter its factorization needed"""
    n = gram_f.shape[0]
    Q = symmetrize(gram_f @ (residuals[:, None] ** 2 * gram_f) / n)
    factor = spd_factor(Q + alpha * gram_f)
    return symmetrize(gram_f @ spd_solve(factor, gram_f)) / n ** 2, factor.jitter_used


def kernel_iv_objective(solution: KernelIVSolution, sample: IVSample, beta=None) -> float:
    """(Y - L_g beta)^T M (Y - L_g beta) + lam beta^T L_g beta"""
    beta = solution.beta if beta is None else np.asarray(beta, dtype=float)
    gram_g = gram_matrix(solution.kernel_g, sample.t)
    gap = sample.y - gram_g @ beta
    return float(gap @ solution.M @ gap + solution.lam * beta @ gram_g @ beta)


def kernel_iv_closed_form(sample: IVSample, kernel_f: KernelSpec, kernel_g: KernelSpec,
                          theta_prior: Optional[Predictor] = None, alpha: float = None,
                          lam: float = 0.0) -> KernelIVSolution:
    if alpha is None or not alpha > 0:
        raise ValueError("alpha must be positive")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    kernel_f = kernel_f.resolve(sample.z)
    kernel_g = kernel_g.resolve(sample.t)
    gram_f = gram_matrix(kernel_f, sample.z)
    gram_g = gram_matrix(kernel_g, sample.t)

    M, jitter_f = weighting_operator(gram_f, sample.y - _prior_values(theta_prior, sample.t), alpha)
    system = symmetrize(gram_g @ M @ gram_g + lam * gram_g)
    factor = spd_factor(system)
    beta = spd_solve(factor, gram_g @ (M @ sample.y))
    return KernelIVSolution(beta=beta, t_train=sample.t, kernel_g=kernel_g, kernel_f=kernel_f, M=M,
                            alpha=alpha, lam=lam, jitter_used=max(jitter_f, factor.jitter_used))


def kernel_iv_least_squares(sample: IVSample, solution: KernelIVSolution) -> np.ndarray:
    """Minimizer of :func:`kernel_iv_objective` as a stacked least-squares problem.

    Uses symmetric square roots of M and L_g so it shares no factorization with
    the closed form.
    """
    gram_g = gram_matrix(solution.kernel_g, sample.t)

    def root(a):
        w, v = linalg.eigh(symmetrize(a))
        return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T

    m_root = root(solution.M)
    design = np.vstack([m_root @ gram_g, np.sqrt(solution.lam) * root(gram_g)])
    target = np.concatenate([m_root @ sample.y, np.zeros(sample.n)])
    return linalg.lstsq(design, target)[0]


def kernel_iv_k_step(sample: IVSample, kernel_f: KernelSpec, kernel_g: KernelSpec, k: int,
                     alpha: float, lam: float = 0.0,
                     theta_prior: Optional[Predictor] = None) -> List[KernelIVSolution]:
    """Stage j weights with stage j-1's predictor; returns every stage"""
    if k < 1:
        raise ValueError("k must be at least 1")
    stages: List[KernelIVSolution] = []
    prior = theta_prior
    for stage in range(k):
        solution = kernel_iv_closed_form(sample, kernel_f, kernel_g, theta_prior=prior, alpha=alpha, lam=lam)
        logger.debug(f"kernel IV stage {stage + 1}/{k}: |beta|={np.linalg.norm(solution.beta):.4e}")
        stages.append(solution)
        prior = solution
    return stages
