#!/usr/bin/env python3

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.estimators import (
    IVSample,
    kernel_iv_closed_form,
    kernel_iv_k_step,
    kernel_iv_least_squares,
    kernel_iv_objective,
)
from src.kernels import KernelSpec
from src.numerics import CounterRng
from src.pipeline import EstimatorConfig, fit_estimator
from tests.helpers import IDENTITY_KERNEL, iv_dataset


def _sample(seed: int, n: int = 20) -> IVSample:
    rng = CounterRng(seed)
    z = rng.normal(n)
    u = rng.normal(n)
    t = z + 0.5 * u + 0.3 * rng.normal(n)
    return IVSample.from_arrays(z, t, np.sin(t) + 0.5 * u)


def test_two_point_solution_by_hand():
    sample = IVSample.from_arrays([0.0, 1.0], [0.0, 1.0], [1.0, 2.0])
    solution = kernel_iv_closed_form(sample, IDENTITY_KERNEL, IDENTITY_KERNEL, alpha=1.0, lam=0.5)
    # L_f = L_g = I: Q = diag(y^2) / 2, M = (Q + I)^{-1} / 4 = diag(1/6, 1/12)
    assert_allclose(solution.M, np.diag([1 / 6, 1 / 12]), atol=1e-15)
    assert_allclose(solution.beta, [0.25, 2 / 7], rtol=1e-12)
    assert_allclose(solution.predict([0.0, 1.0]), [0.25, 2 / 7], rtol=1e-12)


def test_closed_form_minimizes_the_objective():
    sample = _sample(1)
    solution = kernel_iv_closed_form(sample, KernelSpec(bandwidth=0.5), KernelSpec(bandwidth=0.5),
                                     alpha=0.1, lam=1e-2)
    best = kernel_iv_objective(solution, sample)
    rng = CounterRng(2)
    for _ in range(10):
        assert kernel_iv_objective(solution, sample, solution.beta + 0.01 * rng.normal(sample.n)) >= best - 1e-12


def test_closed_form_matches_least_squares():
    for seed in range(5):
        sample = _sample(10 + seed)
        solution = kernel_iv_closed_form(sample, KernelSpec(bandwidth=0.4), KernelSpec(bandwidth=0.4),
                                         alpha=0.05, lam=1e-2)
        beta_ls = kernel_iv_least_squares(sample, solution)
        assert kernel_iv_objective(solution, sample, beta_ls) == pytest.approx(
            kernel_iv_objective(solution, sample), rel=1e-6)


def test_huge_ridge_shrinks_to_zero():
    sample = _sample(3)
    solution = kernel_iv_closed_form(sample, KernelSpec(bandwidth=0.5), KernelSpec(bandwidth=0.5),
                                     alpha=0.1, lam=1e12)
    assert np.max(np.abs(solution.predict(sample.t))) < 1e-8


def test_k_step_uses_the_previous_predictor():
    sample = _sample(4)
    kf, kg = KernelSpec(bandwidth=0.5), KernelSpec(bandwidth=0.5)
    stages = kernel_iv_k_step(sample, kf, kg, 2, alpha=0.1, lam=1e-2)
    assert len(stages) == 2
    first = kernel_iv_closed_form(sample, kf, kg, alpha=0.1, lam=1e-2)
    assert_allclose(stages[0].beta, first.beta)
    second = kernel_iv_closed_form(sample, kf, kg, theta_prior=first, alpha=0.1, lam=1e-2)
    assert_allclose(stages[1].beta, second.beta)


def test_invalid_hyperparameters():
    sample = _sample(5)
    with pytest.raises(ValueError):
        kernel_iv_closed_form(sample, KernelSpec(), KernelSpec(), alpha=0.0)
    with pytest.raises(ValueError):
        kernel_iv_closed_form(sample, KernelSpec(), KernelSpec(), alpha=0.1, lam=-1.0)


def test_linear_kernel_recovers_the_structural_slope():
    problem, data = iv_dataset(200, noise=0.0)
    fit = fit_estimator(problem, data, EstimatorConfig(name='kernel-iv', k=1, lam=1e-10))
    assert fit.theta[0] == pytest.approx(1.5, abs=1e-4)
    assert fit.residuals.shape == (200, 1)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
