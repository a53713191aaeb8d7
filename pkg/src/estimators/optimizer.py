"""Box-constrained quasi-Newton minimization with random restarts.

Shared by the OWGMM and kernel VMM estimators. Objectives that are exact
quadratics in theta are handed over as a :class:`QuadraticForm` and solved
through their normal equations instead.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from ..errors import AllJittersFailed, OptimizerDiverged
from ..numerics import CounterRng, spd_factor, spd_solve

logger = logging.getLogger(__name__)

DEFAULT_BOX = 10.0


@dataclass(frozen=True)
class OptimizerConfig:
    tolerance: float = 1e-8          # gradient sup-norm at termination
    improvement_tol: float = 1e-12   # relative objective decrease per step at termination
    max_iter: int = 1000
    restarts: int = 5
    lower: Optional[Tuple[float, ...]] = None
    upper: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.tolerance <= 0 or self.improvement_tol <= 0:
            raise ValueError("optimizer tolerances must be positive")
        if self.max_iter < 1 or self.restarts < 0:
            raise ValueError("max_iter must be positive and restarts non-negative")

    def box(self, b: int) -> Tuple[np.ndarray, np.ndarray]:
        lower = np.full(b, -DEFAULT_BOX) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (b,))
        upper = np.full(b, DEFAULT_BOX) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (b,))
        if np.any(lower >= upper):
            raise ValueError("parameter box must have lower < upper in every coordinate")
        return np.array(lower), np.array(upper)

    def to_dict(self) -> dict:
        return {
            'tolerance': self.tolerance, 'improvement_tol': self.improvement_tol,
            'max_iter': self.max_iter, 'restarts': self.restarts,
            'lower': None if self.lower is None else list(self.lower),
            'upper': None if self.upper is None else list(self.upper),
        }


@dataclass(frozen=True)
class QuadraticForm:
    """f(theta) = theta^T H theta + 2 g^T theta + c"""
    hessian_half: np.ndarray
    linear: np.ndarray
    constant: float

    def minimizer(self) -> np.ndarray:
        factor = spd_factor(self.hessian_half)
        return -spd_solve(factor, self.linear)


@dataclass
class OptimizerResult:
    theta: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    message: str
    starts: int = 1
    direct: bool = False


ObjectiveFn = Callable[[np.ndarray], Tuple[float, np.ndarray]]


def projected_gradient(theta: np.ndarray, grad: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Gradient with components pushing out of an active bound zeroed"""
    grad = np.array(grad, dtype=float)
    grad[(theta <= lower) & (grad > 0)] = 0.0
    grad[(theta >= upper) & (grad < 0)] = 0.0
    return grad


def _checked(fun: ObjectiveFn) -> ObjectiveFn:
    def wrapped(theta):
        value, grad = fun(theta)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise OptimizerDiverged(f"non-finite objective or gradient at theta={theta}")
        return float(value), np.asarray(grad, dtype=float)
    return wrapped


def _run_lbfgs(fun: ObjectiveFn, start: np.ndarray, lower, upper, config: OptimizerConfig) -> OptimizerResult:
    res = optimize.minimize(
        fun, np.clip(start, lower, upper), jac=True, method='L-BFGS-B',
        bounds=list(zip(lower, upper)),
        options={'maxiter': config.max_iter, 'gtol': config.tolerance, 'ftol': config.improvement_tol},
    )
    value, grad = fun(res.x)
    grad_norm = float(np.max(np.abs(projected_gradient(res.x, grad, lower, upper))))
    return OptimizerResult(
        theta=np.asarray(res.x, dtype=float), value=value, grad_norm=grad_norm,
        iterations=int(res.nit), converged=grad_norm <= config.tolerance, message=str(res.message),
    )


def minimize_objective(fun: ObjectiveFn, theta_start, config: OptimizerConfig,
                       rng: Optional[CounterRng] = None,
                       quadratic: Optional[QuadraticForm] = None) -> OptimizerResult:
    """Minimizes ``fun`` (value and gradient) over the configured box.

    Starts from ``theta_start`` plus ``config.restarts`` uniform draws in the
    box; the lowest objective wins and ties keep the earliest start.
    """
    fun = _checked(fun)
    theta_start = np.asarray(theta_start, dtype=float).reshape(-1)
    lower, upper = config.box(theta_start.size)

    if quadratic is not None:
        try:
            theta = quadratic.minimizer()
        except AllJittersFailed:
            theta = None
            logger.warning("⚠️ Normal equations are singular; falling back to iterative search")
        if theta is not None and np.all(theta >= lower) and np.all(theta <= upper):
            value, grad = fun(theta)
            grad_norm = float(np.max(np.abs(grad)))
            return OptimizerResult(theta=theta, value=value, grad_norm=grad_norm, iterations=0,
                                   converged=grad_norm <= config.tolerance,
                                   message='normal equations', direct=True)

    rng = rng or CounterRng(0)
    starts = [theta_start] + [rng.uniform(theta_start.size, 0.0, 1.0) * (upper - lower) + lower
                              for _ in range(config.restarts)]
    best: Optional[OptimizerResult] = None
    for i, start in enumerate(starts):
        result = _run_lbfgs(fun, start, lower, upper, config)
        logger.debug(f"start {i}: value={result.value:.6e} grad={result.grad_norm:.2e} ({result.message})")
        if best is None or result.value < best.value:
            best = result
    best.starts = len(starts)
    if not best.converged:
        logger.warning(f"⚠️ Optimizer stopped with gradient sup-norm {best.grad_norm:.2e} "
                       f"above tolerance {config.tolerance:.1e}: {best.message}")
    return best
