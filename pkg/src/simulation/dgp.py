"""Samplable designs with a known structural parameter.

Linear IV (b = len(theta0), Z in R^b):

    T = a Z + rho_c U + nu               (quadratic first stage: a (Z^2 - 1) + ...)
    Y = theta0^T T + s(Z) (rho_c sigma U + e)

with U ~ N(0, 1), nu ~ N(0, 1 - rho_c^2), e ~ N(0, sigma^2 (1 - rho_c^2)), so the
structural error has variance sigma^2 s(Z)^2 and s = 1 or (1 + |Z|^2)^{1/2}.
The quantile design shifts the error by -sigma Phi^{-1}(p) so its p-quantile
given Z is zero. The density-ratio design is a two-state chain whose switching
probability depends on the action.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.stats import norm

from ..moments import (
    Dataset,
    MomentProblem,
    PolynomialStateBasis,
    SmoothingConfig,
    TabularPolicy,
    density_ratio_problem,
    linear_iv_problem,
    quantile_iv_problem,
)
from ..numerics import CounterRng

logger = logging.getLogger(__name__)

DGP_KINDS = ('linear_iv_homoskedastic', 'linear_iv_heteroskedastic', 'quantile_iv', 'density_ratio_chain')
FIRST_STAGES = ('linear', 'quadratic')


@dataclass(frozen=True)
class DgpSpec:
    kind: str = 'linear_iv_homoskedastic'
    theta0: Tuple[float, ...] = (1.5,)
    a: float = 1.0
    sigma: float = 1.0
    rho_c: float = 0.5
    first_stage: str = 'linear'
    # zero structural error; sigma stays the declared scale
    noiseless: bool = False
    p: float = 0.5
    temperature: Optional[float] = None
    # chain: P(stay | a), P(a = 1 | s) under the behavior and target policies
    stay: Tuple[float, float] = (0.9, 0.3)
    behavior: Tuple[float, float] = (0.5, 0.5)
    target: Tuple[float, float] = (0.8, 0.2)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DGP_KINDS:
            raise ValueError(f"unknown DGP kind '{self.kind}', expected one of {DGP_KINDS}")
        if self.first_stage not in FIRST_STAGES:
            raise ValueError(f"unknown first stage '{self.first_stage}'")
        if not abs(self.rho_c) < 1:
            raise ValueError("confounding correlation must satisfy |rho_c| < 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.a == 0:
            raise ValueError("instrument strength a must be non-zero")
        if not 0 < self.p < 1:
            raise ValueError("quantile level must lie in (0, 1)")
        for name in ('stay', 'behavior', 'target'):
            probs = getattr(self, name)
            if len(probs) != 2 or any(not 0 <= q <= 1 for q in probs):
                raise ValueError(f"'{name}' must hold two probabilities")
        if any(not 0 < q < 1 for q in self.behavior):
            raise ValueError("behavior policy must give every action positive probability")
        if self.kind == 'density_ratio_chain' and len(self.theta0) != 2:
            raise ValueError("the chain design has a two-parameter ratio basis")

    @property
    def b(self) -> int:
        return len(self.theta0)

    @property
    def heteroskedastic(self) -> bool:
        return self.kind == 'linear_iv_heteroskedastic'

    def to_dict(self) -> dict:
        data = asdict(self)
        for key in ('theta0', 'stay', 'behavior', 'target'):
            data[key] = list(data[key])
        return data


def switching_probabilities(stay, policy) -> np.ndarray:
    """P(s' != s | s) under a policy given by P(a = 1 | s)"""
    stay = np.asarray(stay, dtype=float)
    policy = np.asarray(policy, dtype=float)
    return 1.0 - ((1.0 - policy) * stay[0] + policy * stay[1])


def stationary_distribution(stay, policy) -> np.ndarray:
    r = switching_probabilities(stay, policy)
    if r.sum() == 0.0:
        raise ValueError("chain never switches state; stationary distribution is not unique")
    return np.array([r[1], r[0]]) / r.sum()


def chain_theta(spec: DgpSpec) -> np.ndarray:
    """Coefficients of d_e/d_b in the basis (1, s)"""
    ratio = stationary_distribution(spec.stay, spec.target) / stationary_distribution(spec.stay, spec.behavior)
    return np.array([ratio[0], ratio[1] - ratio[0]])


def true_theta(spec: DgpSpec) -> np.ndarray:
    if spec.kind == 'density_ratio_chain':
        return chain_theta(spec)
    return np.asarray(spec.theta0, dtype=float)


def dgp_problem(spec: DgpSpec) -> MomentProblem:
    if spec.kind == 'density_ratio_chain':
        return density_ratio_problem(TabularPolicy.from_action_one(spec.target),
                                     TabularPolicy.from_action_one(spec.behavior),
                                     basis=PolynomialStateBasis(1))
    if spec.kind == 'quantile_iv':
        temperature = spec.temperature if spec.temperature is not None else 0.05 * spec.sigma
        return quantile_iv_problem(spec.p, SmoothingConfig(temperature), b=spec.b)
    return linear_iv_problem(spec.b)


def _iv_records(spec: DgpSpec, n: int, rng: CounterRng) -> np.ndarray:
    b = spec.b
    z = rng.normal((n, b))
    u = rng.normal(n)
    nu = rng.normal((n, b), scale=np.sqrt(1.0 - spec.rho_c ** 2))
    e = rng.normal(n, scale=spec.sigma * np.sqrt(1.0 - spec.rho_c ** 2))

    driver = spec.a * z if spec.first_stage == 'linear' else spec.a * (z ** 2 - 1.0)
    t = driver + spec.rho_c * u[:, None] + nu
    error = spec.rho_c * spec.sigma * u + e
    if spec.heteroskedastic:
        error = error * np.sqrt(1.0 + np.sum(z ** 2, axis=1))
    if spec.noiseless:
        error = np.zeros(n)
    if spec.kind == 'quantile_iv':
        error = error - spec.sigma * norm.ppf(spec.p)
    y = t @ np.asarray(spec.theta0, dtype=float) + error
    return np.column_stack([z, t, y])


def _chain_records(spec: DgpSpec, n: int, rng: CounterRng) -> np.ndarray:
    d_b = stationary_distribution(spec.stay, spec.behavior)
    s = (rng.uniform(n) < d_b[1]).astype(int)
    a = rng.bernoulli(np.asarray(spec.behavior, dtype=float)[s])
    stays = rng.bernoulli(np.asarray(spec.stay, dtype=float)[a])
    s_next = np.where(stays == 1, s, 1 - s)
    return np.column_stack([s, a, s_next]).astype(float)


def sample_dgp(spec: DgpSpec, n: int, rng: Optional[CounterRng] = None) -> Dataset:
    """n records of the design; the stream defaults to one keyed by ``spec.seed``"""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = rng or CounterRng(spec.seed)
    if spec.kind == 'density_ratio_chain':
        records = _chain_records(spec, n, rng)
    else:
        records = _iv_records(spec, n, rng)
    return Dataset.from_records(dgp_problem(spec), records)


def oracle_conditionals(spec: DgpSpec) -> Tuple[Callable, Callable]:
    """Known E[rho' | Z] and V(Z) at theta0 for the linear IV designs"""
    if spec.kind not in ('linear_iv_homoskedastic', 'linear_iv_heteroskedastic') or spec.noiseless:
        raise ValueError("oracle conditionals are available for the noisy linear IV designs only")

    def jacobian(z):
        z = np.asarray(z, dtype=float)
        driver = spec.a * z if spec.first_stage == 'linear' else spec.a * (z ** 2 - 1.0)
        return -driver[:, None, :]

    def variance(z):
        z = np.asarray(z, dtype=float)
        scale = 1.0 + np.sum(z ** 2, axis=1) if spec.heteroskedastic else np.ones(z.shape[0])
        return (spec.sigma ** 2 * scale)[:, None, None]

    return jacobian, variance


def efficient_variance(spec: DgpSpec) -> np.ndarray:
    """Omega0^{-1} = sigma^2 / a^2 I of the homoskedastic Gaussian design"""
    if spec.kind != 'linear_iv_homoskedastic' or spec.first_stage != 'linear':
        raise ValueError("the analytic bound is known for the homoskedastic linear design only")
    return spec.sigma ** 2 / spec.a ** 2 * np.eye(spec.b)
