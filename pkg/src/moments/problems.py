"""Conditional moment problems E[rho(X; theta0) | Z] = 0 with finite-dimensional theta.

Problems evaluate residuals and Jacobians for a whole block of records at once:
``residuals`` returns an (n, m) array, ``jacobian`` an (n, m, b) array.
"""

import abc
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from ..errors import DegenerateData, DimensionMismatch, MalformedRecord, ZeroBehaviorProbability
from .dataset import Dataset, RecordLayout

logger = logging.getLogger(__name__)


class MomentProblem(abc.ABC):
    m: int
    b: int
    layout: RecordLayout
    # rho affine in theta with a theta-free Jacobian
    linear: bool = False
    name: str = 'moment-problem'

    @abc.abstractmethod
    def residuals(self, records: np.ndarray, theta: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def jacobian(self, records: np.ndarray, theta: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def instruments(self, records: np.ndarray) -> np.ndarray:
        ...

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.b:
            raise DimensionMismatch(f"{self.name} expects {self.b} parameters, got {theta.size}")
        return theta

    def rho(self, x, theta) -> np.ndarray:
        return self.residuals(self.layout.decode(x), self.check_theta(theta))[0]

    def rho_prime(self, x, theta) -> np.ndarray:
        return self.jacobian(self.layout.decode(x), self.check_theta(theta))[0]

    def describe(self) -> dict:
        return {'name': self.name, 'm': self.m, 'b': self.b, 'layout': self.layout.to_dict()}


class LinearIVProblem(MomentProblem):
    """rho = y - theta^T t"""
    m = 1
    linear = True
    name = 'linear_iv'

    def __init__(self, b: int, layout: Optional[RecordLayout] = None, instrument_dim: Optional[int] = None):
        if b < 1:
            raise ValueError("parameter dimension must be at least 1")
        self.b = b
        self.layout = layout or RecordLayout.sequential(z=instrument_dim or b, t=b, y=1)
        if len(self.layout.roles.get('t', [])) != b:
            raise DimensionMismatch(f"layout 't' role must have {b} columns")

    def residuals(self, records, theta):
        theta = self.check_theta(theta)
        t = self.layout.columns(records, 't')
        y = self.layout.column(records, 'y')
        return (y - t @ theta)[:, None]

    def jacobian(self, records, theta):
        return -self.layout.columns(records, 't')[:, None, :]

    def instruments(self, records):
        return self.layout.columns(records, 'z')


@dataclass(frozen=True)
class SmoothingConfig:
    """Logistic temperature replacing the quantile indicator"""
    temperature: float

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("smoothing temperature must be positive")

    @classmethod
    def default_for(cls, outcomes, factor: float = 0.05) -> 'SmoothingConfig':
        spread = float(np.std(np.asarray(outcomes, dtype=float)))
        if not spread > 0:
            raise DegenerateData("outcomes have zero spread; pick a temperature explicitly")
        return cls(factor * spread)


class QuantileIVProblem(MomentProblem):
    """rho = sigmoid((theta^T t - y) / tau) - p, the smoothed 1{y <= g(t; theta)} - p"""
    m = 1
    name = 'quantile_iv'

    def __init__(self, p: float, smoothing: SmoothingConfig, b: int = 1,
                 layout: Optional[RecordLayout] = None, instrument_dim: Optional[int] = None):
        if not 0 < p < 1:
            raise ValueError("quantile level p must lie in (0, 1)")
        self.p = p
        self.smoothing = smoothing
        self.b = b
        self.layout = layout or RecordLayout.sequential(z=instrument_dim or b, t=b, y=1)

    def _scaled_gap(self, records, theta):
        t = self.layout.columns(records, 't')
        y = self.layout.column(records, 'y')
        return (t @ theta - y) / self.smoothing.temperature

    def residuals(self, records, theta):
        theta = self.check_theta(theta)
        return (expit(self._scaled_gap(records, theta)) - self.p)[:, None]

    def jacobian(self, records, theta):
        theta = self.check_theta(theta)
        s = expit(self._scaled_gap(records, theta))
        slope = s * (1.0 - s) / self.smoothing.temperature
        return (slope[:, None] * self.layout.columns(records, 't'))[:, None, :]

    def instruments(self, records):
        return self.layout.columns(records, 'z')

    def describe(self):
        return {**super().describe(), 'p': self.p, 'temperature': self.smoothing.temperature}


@dataclass(frozen=True)
class TabularPolicy:
    """pi(a | s) for integer states and actions, ``probabilities[s][a]``"""
    probabilities: tuple

    def __post_init__(self):
        table = np.asarray(self.probabilities, dtype=float)
        if table.ndim != 2 or np.any(table < 0) or not np.allclose(table.sum(axis=1), 1.0):
            raise ValueError("policy table rows must be probability vectors")

    @classmethod
    def from_action_one(cls, probs: Sequence[float]) -> 'TabularPolicy':
        """Two-action policy from P(a = 1 | s) per state"""
        return cls(tuple((1.0 - p, p) for p in probs))

    def __call__(self, actions, states) -> np.ndarray:
        table = np.asarray(self.probabilities, dtype=float)
        return table[np.asarray(states, dtype=int), np.asarray(actions, dtype=int)]


@dataclass(frozen=True)
class PolynomialStateBasis:
    """phi(s) = (1, s, ..., s^degree)"""
    degree: int = 1

    @property
    def dim(self) -> int:
        return self.degree + 1

    def __call__(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        return np.stack([states ** k for k in range(self.degree + 1)], axis=-1)


class DensityRatioProblem(MomentProblem):
    """rho = d(s; theta) pi_e(a|s) / pi_b(a|s) - d(s'; theta) with d = theta^T phi, Z = s'"""
    m = 1
    linear = True
    name = 'density_ratio'

    def __init__(self, pi_e: Callable, pi_b: Callable, basis: Optional[Callable] = None,
                 layout: Optional[RecordLayout] = None):
        self.pi_e = pi_e
        self.pi_b = pi_b
        self.basis = basis or PolynomialStateBasis(1)
        self.b = getattr(self.basis, 'dim', None) or int(np.asarray(self.basis(np.zeros(1))).shape[-1])
        self.layout = layout or RecordLayout.sequential(s=1, a=1, s_next=1)

    def policy_ratio(self, records) -> np.ndarray:
        s = self.layout.column(records, 's')
        a = self.layout.column(records, 'a')
        behavior = np.asarray(self.pi_b(a, s), dtype=float)
        if np.any(behavior <= 0):
            raise ZeroBehaviorProbability("behavior policy gives zero probability to a logged action")
        return np.asarray(self.pi_e(a, s), dtype=float) / behavior

    def ratio_values(self, states, theta) -> np.ndarray:
        """d(s; theta) at the given states"""
        return self.basis(states) @ self.check_theta(theta)

    def residuals(self, records, theta):
        theta = self.check_theta(theta)
        ratio = self.policy_ratio(records)
        here = self.ratio_values(self.layout.column(records, 's'), theta)
        there = self.ratio_values(self.layout.column(records, 's_next'), theta)
        return (here * ratio - there)[:, None]

    def jacobian(self, records, theta):
        ratio = self.policy_ratio(records)
        phi_here = self.basis(self.layout.column(records, 's'))
        phi_there = self.basis(self.layout.column(records, 's_next'))
        return (phi_here * ratio[:, None] - phi_there)[:, None, :]

    def instruments(self, records):
        return self.layout.columns(records, 's_next')


class PolicySurrogateProblem(MomentProblem):
    """rho = |psi| l'(theta^T x, sign psi) for the logistic loss l(u, s) = log(1 + exp(-s u)).

    Correct specification of the surrogate-loss policy model; conditions on the
    covariates themselves.
    """
    m = 1
    name = 'policy_surrogate'

    def __init__(self, b: int, layout: Optional[RecordLayout] = None):
        self.b = b
        self.layout = layout or RecordLayout.sequential(x=b, psi=1)

    def _parts(self, records, theta):
        x = self.layout.columns(records, 'x')
        psi = self.layout.column(records, 'psi')
        return x, np.abs(psi), np.sign(psi), x @ theta

    def residuals(self, records, theta):
        x, weight, sign, u = self._parts(records, self.check_theta(theta))
        return (-weight * sign * expit(-sign * u))[:, None]

    def jacobian(self, records, theta):
        x, weight, sign, u = self._parts(records, self.check_theta(theta))
        curvature = weight * sign ** 2 * expit(sign * u) * expit(-sign * u)
        return (curvature[:, None] * x)[:, None, :]

    def instruments(self, records):
        return self.layout.columns(records, 'x')


class PinnedProblem(MomentProblem):
    """Fixes one coordinate of the wrapped problem's theta, removing it from the search"""

    def __init__(self, base: MomentProblem, index: int, value: float):
        if not 0 <= index < base.b or base.b < 2:
            raise ValueError("pinned index out of range")
        self.base = base
        self.index = index
        self.value = float(value)
        self.m = base.m
        self.b = base.b - 1
        self.layout = base.layout
        self.linear = base.linear
        self.name = f"{base.name}[theta_{index}={value:g}]"

    def expand(self, theta) -> np.ndarray:
        return np.insert(self.check_theta(theta), self.index, self.value)

    def residuals(self, records, theta):
        return self.base.residuals(records, self.expand(theta))

    def jacobian(self, records, theta):
        return np.delete(self.base.jacobian(records, self.expand(theta)), self.index, axis=2)

    def instruments(self, records):
        return self.base.instruments(records)


class StackedProblem(MomentProblem):
    """Residuals of several problems over the same records and theta, concatenated.

    Instruments come from the first problem.
    """

    def __init__(self, problems: Sequence[MomentProblem]):
        problems = list(problems)
        if not problems:
            raise ValueError("need at least one problem to stack")
        if len({p.b for p in problems}) != 1:
            raise DimensionMismatch("stacked problems must share the parameter dimension")
        self.problems = problems
        self.m = sum(p.m for p in problems)
        self.b = problems[0].b
        self.layout = problems[0].layout
        self.linear = all(p.linear for p in problems)
        self.name = "+".join(p.name for p in problems)

    def residuals(self, records, theta):
        return np.concatenate([p.residuals(records, theta) for p in self.problems], axis=1)

    def jacobian(self, records, theta):
        return np.concatenate([p.jacobian(records, theta) for p in self.problems], axis=1)

    def instruments(self, records):
        return self.problems[0].instruments(records)


def linear_iv_problem(b: int, layout: Optional[RecordLayout] = None, instrument_dim: Optional[int] = None) -> LinearIVProblem:
    return LinearIVProblem(b, layout=layout, instrument_dim=instrument_dim)


def quantile_iv_problem(p: float, smoothing: SmoothingConfig, b: int = 1,
                        layout: Optional[RecordLayout] = None, instrument_dim: Optional[int] = None) -> QuantileIVProblem:
    return QuantileIVProblem(p, smoothing, b=b, layout=layout, instrument_dim=instrument_dim)


def density_ratio_problem(pi_e: Callable, pi_b: Callable, basis: Optional[Callable] = None,
                          layout: Optional[RecordLayout] = None) -> DensityRatioProblem:
    return DensityRatioProblem(pi_e, pi_b, basis=basis, layout=layout)


def policy_surrogate_problem(b: int, layout: Optional[RecordLayout] = None) -> PolicySurrogateProblem:
    return PolicySurrogateProblem(b, layout=layout)


def pin_parameter(problem: MomentProblem, index: int, value: float) -> PinnedProblem:
    return PinnedProblem(problem, index, value)


def stack_problems(*problems: MomentProblem) -> StackedProblem:
    return StackedProblem(problems)


def residual_matrix(problem: MomentProblem, data: Dataset, theta) -> np.ndarray:
    """(n, m) matrix of rho_k(x_i; theta)"""
    return problem.residuals(data.records, problem.check_theta(theta))


def stacked_residuals(problem: MomentProblem, data: Dataset, theta) -> np.ndarray:
    """residual_matrix flattened row-major into the (i, k) -> i*m + k ordering"""
    return residual_matrix(problem, data, theta).reshape(-1)


def stacked_jacobian(problem: MomentProblem, data: Dataset, theta) -> np.ndarray:
    """(n*m, b) Jacobian in the same (i, k) ordering"""
    jac = problem.jacobian(data.records, problem.check_theta(theta))
    return jac.reshape(data.n * problem.m, problem.b)


def normalize_density_ratio(problem: DensityRatioProblem, data: Dataset, theta) -> np.ndarray:
    """Rescales theta so the empirical mean of d(S_i; theta) is one"""
    theta = problem.check_theta(theta)
    mean_ratio = float(np.mean(problem.ratio_values(problem.layout.column(data.records, 's'), theta)))
    if mean_ratio == 0.0 or not np.isfinite(mean_ratio):
        raise DegenerateData("density ratio has zero empirical mean; cannot rescale")
    return theta / mean_ratio
