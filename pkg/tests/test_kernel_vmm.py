#!/usr/bin/env python3

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.estimators import (
    AlphaSchedule,
    VmmConfig,
    assemble,
    k_step_estimate,
    minimize,
    objective,
    objective_gradient,
    representer_supremum,
)
from src.estimators.kernel_vmm import block_gram
from src.kernels import KernelSpec, gram_matrix
from src.moments import Dataset, LinearIVProblem, SmoothingConfig, linear_iv_problem, quantile_iv_problem, stack_problems
from src.numerics import CounterRng, central_difference
from tests.helpers import iv_dataset, single_record


class IterativeLinearIV(LinearIVProblem):
    """Linear IV that hides its linearity from the optimizer"""
    linear = False


def test_single_record_objective_by_hand():
    problem, data = single_record(0.0, 1.0, 2.0)
    asm = assemble(problem, data, KernelSpec(bandwidth=1.0), np.zeros(1), alpha=1.0)
    # Q = (K rho~)^2 = 4, so A = 1 / (4 + alpha)
    assert_allclose(asm.A, [[0.2]])
    for theta in (-1.0, 0.0, 0.5, 2.0, 3.0):
        assert objective(asm, problem, data, [theta]) == pytest.approx((2.0 - theta) ** 2 / 5.0)
        assert objective_gradient(asm, problem, data, [theta])[0] == pytest.approx(-2.0 * (2.0 - theta) / 5.0)


def test_zero_prior_residuals_leave_the_ridge():
    z = np.arange(5.0)
    t = z + 1.0
    problem = linear_iv_problem(1)
    data = Dataset.from_records(problem, np.column_stack([z, t, 1.5 * t]))
    spec = KernelSpec(bandwidth=0.5)
    asm = assemble(problem, data, spec, [1.5], alpha=0.3)
    assert_allclose(asm.Q, np.zeros((5, 5)), atol=0)
    assert_allclose(asm.A, gram_matrix(spec, z) / 0.3, rtol=1e-8, atol=1e-10)


def test_block_gram_has_no_cross_dimension_entries():
    grams = [np.full((3, 3), 1.0), np.full((3, 3), 2.0)]
    L = block_gram(grams)
    assert_allclose(L[0::2, 0::2], grams[0])
    assert_allclose(L[1::2, 1::2], grams[1])
    assert not np.any(L[0::2, 1::2]) and not np.any(L[1::2, 0::2])


def test_closed_form_matches_the_representer_supremum():
    for seed in range(5):
        rng = CounterRng(100 + seed)
        problem, data = iv_dataset(30, seed=seed, instrument_dim=2)
        asm = assemble(problem, data, KernelSpec(), rng.normal(1), alpha=0.05)
        theta = rng.normal(1)
        assert representer_supremum(asm, problem, data, theta) == pytest.approx(
            objective(asm, problem, data, theta), rel=1e-7)


def test_two_residual_closed_form_matches_the_representer_supremum():
    problem, data = iv_dataset(25, seed=3)
    stacked = stack_problems(problem, quantile_iv_problem(0.5, SmoothingConfig(0.5)))
    asm = assemble(stacked, data, [KernelSpec(bandwidth=1.0), KernelSpec(bandwidth=0.5)], [0.2], alpha=0.1)
    assert asm.L.shape == (50, 50)
    assert representer_supremum(asm, stacked, data, [1.1]) == pytest.approx(
        objective(asm, stacked, data, [1.1]), rel=1e-7)


def test_gradient_matches_finite_differences():
    rng = CounterRng(21)
    problem = quantile_iv_problem(0.4, SmoothingConfig(0.3), b=2)
    data = Dataset.from_records(problem, rng.normal((40, 5)))
    asm = assemble(problem, data, KernelSpec(), [0.1, -0.2], alpha=0.05)
    for _ in range(5):
        theta = rng.normal(2)
        numeric = central_difference(lambda th: objective(asm, problem, data, th), theta, step=1e-6)
        analytic = objective_gradient(asm, problem, data, theta)
        assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-9)


def test_objective_is_non_negative():
    problem, data = iv_dataset(40)
    asm = assemble(problem, data, KernelSpec(), [0.0], alpha=0.1)
    for theta in np.linspace(-5, 5, 21):
        assert objective(asm, problem, data, [theta]) >= 0.0


def test_direct_solve_matches_iterative_search():
    problem, data = iv_dataset(150)
    config = VmmConfig(alpha=0.05)
    direct = minimize(problem, data, KernelSpec(), [0.0], config)
    iterative = minimize(IterativeLinearIV(1), data, KernelSpec(), [0.0], config)
    assert direct.theta[0] == pytest.approx(iterative.theta[0], abs=1e-6)


def test_noiseless_design_is_recovered():
    problem, data = iv_dataset(100, noise=0.0)
    solution = minimize(problem, data, KernelSpec(), [0.0])
    assert solution.theta[0] == pytest.approx(1.5, abs=1e-4)
    assert solution.objective == pytest.approx(0.0, abs=1e-10)


def test_k_step_traces_every_stage():
    problem, data = iv_dataset(150)
    single = k_step_estimate(problem, data, KernelSpec(), 1, [0.0])
    direct = minimize(problem, data, KernelSpec(), [0.0], theta_start=[0.0])
    assert_allclose(single.theta, direct.theta)

    three = k_step_estimate(problem, data, KernelSpec(), 3, [0.0])
    assert len(three.trace) == 3 and len(three.stage_objectives) == 3
    assert_allclose(three.assembly.theta_prior, three.trace[1])
    with pytest.raises(ValueError):
        k_step_estimate(problem, data, KernelSpec(), 0, [0.0])


def test_alpha_schedule():
    assert AlphaSchedule()(1000) == pytest.approx(0.1 * 1000 ** -0.4)
    assert VmmConfig(alpha=0.7).alpha_for(10) == 0.7
    with pytest.raises(ValueError):
        AlphaSchedule(scale=0.0)
    with pytest.raises(ValueError):
        assemble(*single_record(0.0, 1.0, 2.0), KernelSpec(bandwidth=1.0), [0.0], alpha=0.0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
