"""Small synthetic samples shared by the test modules."""

import os

import numpy as np

from src.kernels import KernelSpec
from src.moments import Dataset, linear_iv_problem
from src.numerics import CounterRng

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'fixtures')

# exp(-1 / (2 * 0.01^2)) underflows to zero, so unit-spaced points give K = I
IDENTITY_KERNEL = KernelSpec(bandwidth=0.01)


def iv_dataset(n: int, seed: int = 7, theta0: float = 1.5, noise: float = 1.0, instrument_dim: int = 1):
    """Confounded scalar linear IV sample; y = theta0 t exactly when noise is 0"""
    rng = CounterRng(seed)
    z = rng.normal((n, instrument_dim))
    u = rng.normal(n)
    t = z.sum(axis=1) + 0.5 * u + 0.5 * rng.normal(n)
    y = theta0 * t + noise * (0.5 * u + 0.5 * rng.normal(n))
    problem = linear_iv_problem(1, instrument_dim=instrument_dim)
    return problem, Dataset.from_records(problem, np.column_stack([z, t, y]))


def single_record(z: float, t: float, y: float):
    problem = linear_iv_problem(1)
    return problem, Dataset.from_records(problem, np.array([[z, t, y]]))
