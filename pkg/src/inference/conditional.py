"""Nadaraya-Watson estimates of conditional expectations given the instruments."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from ..errors import DegenerateData, SingularV
from ..kernels import KernelSpec, cross_gram
from ..moments import Dataset, MomentProblem, residual_matrix

logger = logging.getLogger(__name__)

DEFAULT_RIDGE = 1e-8
DEFAULT_EIGEN_FLOOR = 1e-6

# z (n, d_z) -> (n, m, b) conditional Jacobian, or (n, m, m) conditional variance
ConditionalOracle = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ConditionalRegressor:
    """prediction(z) = sum_i w_i(z) target_i, w_i(z) = K(z, z_i) / (sum_j K(z, z_j) + ridge)"""
    spec: KernelSpec
    ridge: float
    zs: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)

    def weights(self, z) -> np.ndarray:
        gram = cross_gram(self.spec, z, self.zs)
        return gram / (gram.sum(axis=1, keepdims=True) + self.ridge)

    def predict(self, z) -> np.ndarray:
        return self.weights(z) @ self.targets


def scott_bandwidth(zs) -> float:
    """n^(-1/(d+4)) times the mean coordinate standard deviation"""
    zs = np.asarray(zs, dtype=float)
    zs = zs[:, None] if zs.ndim == 1 else zs
    spread = float(np.mean(np.std(zs, axis=0)))
    if not spread > 0:
        raise DegenerateData("instruments have zero spread; pick a bandwidth explicitly")
    return spread * zs.shape[0] ** (-1.0 / (zs.shape[1] + 4))


def fit_conditional(zs, targets, spec: Optional[KernelSpec] = None, ridge: float = DEFAULT_RIDGE) -> ConditionalRegressor:
    """Gaussian smoother at the Scott bandwidth unless ``spec`` says otherwise"""
    zs = np.asarray(zs, dtype=float)
    zs = zs[:, None] if zs.ndim == 1 else zs
    targets = np.asarray(targets, dtype=float)
    targets = targets[:, None] if targets.ndim == 1 else targets
    if zs.shape[0] < 2:
        raise DegenerateData("conditional expectation needs at least two observations")
    if targets.shape[0] != zs.shape[0]:
        raise DegenerateData(f"{targets.shape[0]} targets for {zs.shape[0]} instrument rows")
    if ridge < 0:
        raise ValueError("ridge floor must be non-negative")
    spec = spec.resolve(zs) if spec is not None else KernelSpec(bandwidth=scott_bandwidth(zs))
    return ConditionalRegressor(spec=spec, ridge=ridge, zs=zs, targets=targets)


@dataclass(frozen=True)
class ConditionalConfig:
    # None picks the Scott bandwidth
    kernel: Optional[KernelSpec] = None
    ridge: float = DEFAULT_RIDGE
    eigen_floor: float = DEFAULT_EIGEN_FLOOR

    def to_dict(self) -> dict:
        return {'kernel': None if self.kernel is None else self.kernel.to_dict(),
                'ridge': self.ridge, 'eigen_floor': self.eigen_floor}


def conditional_jacobian(problem: MomentProblem, data: Dataset, theta, config: ConditionalConfig) -> np.ndarray:
    """(n, m, b) estimate of E[rho'(X; theta) | Z] at the sample instruments"""
    jac = problem.jacobian(data.records, problem.check_theta(theta)).reshape(data.n, -1)
    fitted = fit_conditional(data.instruments, jac, config.kernel, config.ridge)
    return fitted.predict(data.instruments).reshape(data.n, problem.m, problem.b)


def conditional_variance(problem: MomentProblem, data: Dataset, theta, config: ConditionalConfig) -> np.ndarray:
    """(n, m, m) estimate of V(Z; theta) = E[rho rho^T | Z] at the sample instruments"""
    residuals = residual_matrix(problem, data, theta)
    outer = np.einsum('ik,il->ikl', residuals, residuals).reshape(data.n, -1)
    fitted = fit_conditional(data.instruments, outer, config.kernel, config.ridge)
    v = fitted.predict(data.instruments).reshape(data.n, problem.m, problem.m)
    return (v + np.swapaxes(v, 1, 2)) / 2.0


def floored_inverse(v: np.ndarray, relative_floor: float) -> np.ndarray:
    """Inverse of a symmetric V with eigenvalues raised to relative_floor * tr(V)/m"""
    m = v.shape[0]
    floor = relative_floor * float(np.trace(v)) / m
    if not floor > 0:
        raise SingularV("conditional variance estimate has non-positive trace")
    w, vecs = linalg.eigh(v)
    w = np.maximum(w, floor)
    if np.min(w) < floor:
        raise SingularV("eigenvalue floor failed to apply")
    return (vecs / w) @ vecs.T


def omega0_plug_in(problem: MomentProblem, data: Dataset, theta_hat, config: Optional[ConditionalConfig] = None,
                   oracle_jacobian: Optional[ConditionalOracle] = None,
                   oracle_variance: Optional[ConditionalOracle] = None) -> np.ndarray:
    """Omega0 = E_n[g(Z)^T V(Z)^{-1} g(Z)] with g = E[rho' | Z].

    ``oracle_jacobian`` and ``oracle_variance`` replace the kernel estimates
    with known conditional moments of the design.
    """
    config = config or ConditionalConfig()
    theta_hat = problem.check_theta(theta_hat)
    g = (oracle_jacobian(data.instruments) if oracle_jacobian is not None
         else conditional_jacobian(problem, data, theta_hat, config))
    v = (oracle_variance(data.instruments) if oracle_variance is not None
         else conditional_variance(problem, data, theta_hat, config))
    g = np.asarray(g, dtype=float).reshape(data.n, problem.m, problem.b)
    v = np.asarray(v, dtype=float).reshape(data.n, problem.m, problem.m)

    omega = np.zeros((problem.b, problem.b))
    for gi, vi in zip(g, v):
        omega += gi.T @ floored_inverse(vi, config.eigen_floor) @ gi
    omega /= data.n
    return (omega + omega.T) / 2.0
