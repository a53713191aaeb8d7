#!/usr/bin/env python3

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.errors import DimensionMismatch, MalformedRecord, ZeroBehaviorProbability
from src.moments import (
    Dataset,
    RecordLayout,
    SmoothingConfig,
    TabularPolicy,
    density_ratio_problem,
    linear_iv_problem,
    normalize_density_ratio,
    pin_parameter,
    policy_surrogate_problem,
    quantile_iv_problem,
    residual_matrix,
    stack_problems,
    stacked_jacobian,
    stacked_residuals,
)
from src.numerics import CounterRng, central_difference


def _numeric_jacobian(problem, records, theta):
    return central_difference(lambda th: problem.residuals(records, th), theta, step=1e-6)


def test_linear_iv_single_record():
    problem = linear_iv_problem(2)
    x = [0.1, -0.3, 1.0, 2.0, 4.0]
    assert_allclose(problem.rho(x, [0.5, 1.0]), [4.0 - 0.5 - 2.0])
    assert_allclose(problem.rho_prime(x, [0.5, 1.0]), [[-1.0, -2.0]])


def test_theta_dimension_is_checked():
    with pytest.raises(DimensionMismatch):
        linear_iv_problem(2).rho([0.0, 0.0, 1.0, 1.0, 1.0], [1.0])


def test_malformed_records_are_rejected():
    problem = linear_iv_problem(1)
    with pytest.raises(MalformedRecord):
        problem.rho([0.0, np.nan, 1.0], [1.0])
    with pytest.raises(MalformedRecord):
        problem.rho([0.0, 1.0], [1.0])


def test_layout_roles_and_width():
    layout = RecordLayout.sequential(z=2, t=1, y=1)
    assert layout.roles == {'z': [0, 1], 't': [2], 'y': [3]}
    assert layout.width == 4
    with pytest.raises(MalformedRecord):
        layout.columns(np.zeros((1, 4)), 'psi')


def test_quantile_jacobian_matches_finite_differences():
    problem = quantile_iv_problem(0.3, SmoothingConfig(0.2), b=2)
    records = CounterRng(4).normal((15, 5))
    theta = np.array([0.4, -0.7])
    assert_allclose(problem.jacobian(records, theta), _numeric_jacobian(problem, records, theta), atol=1e-7)


def test_policy_surrogate_jacobian_matches_finite_differences():
    problem = policy_surrogate_problem(3)
    records = CounterRng(8).normal((20, 4))
    theta = np.array([0.2, -0.5, 1.1])
    assert_allclose(problem.jacobian(records, theta), _numeric_jacobian(problem, records, theta), atol=1e-7)


def test_density_ratio_residual_by_hand():
    problem = density_ratio_problem(TabularPolicy.from_action_one((0.8, 0.2)),
                                    TabularPolicy.from_action_one((0.5, 0.5)))
    # d(0) = 0.5, d(1) = 1.5, pi_e / pi_b = 0.8 / 0.5
    assert_allclose(problem.rho([0, 1, 1], [0.5, 1.0]), [0.5 * 1.6 - 1.5])
    records = np.array([[0, 1, 1], [1, 0, 0], [1, 1, 1]], dtype=float)
    theta = np.array([0.5, 1.0])
    assert_allclose(problem.jacobian(records, theta), _numeric_jacobian(problem, records, theta), atol=1e-8)


def test_zero_behavior_probability_is_reported():
    problem = density_ratio_problem(TabularPolicy.from_action_one((0.5, 0.5)),
                                    TabularPolicy.from_action_one((1.0, 0.5)))
    with pytest.raises(ZeroBehaviorProbability):
        problem.rho([0, 0, 1], [1.0, 0.0])


def test_normalized_density_ratio_has_unit_mean():
    problem = density_ratio_problem(TabularPolicy.from_action_one((0.8, 0.2)),
                                    TabularPolicy.from_action_one((0.5, 0.5)))
    data = Dataset.from_records(problem, np.array([[0, 1, 1], [1, 0, 0], [1, 1, 0], [0, 0, 0]], dtype=float))
    theta = normalize_density_ratio(problem, data, [2.0, 1.0])
    assert np.mean(problem.ratio_values(data.records[:, 0], theta)) == pytest.approx(1.0)


def test_pinned_problem_removes_a_coordinate():
    base = linear_iv_problem(2)
    pinned = pin_parameter(base, 0, 1.0)
    records = CounterRng(6).normal((7, 5))
    assert pinned.b == 1
    assert_array_equal(pinned.expand([3.0]), [1.0, 3.0])
    assert_allclose(pinned.residuals(records, [3.0]), base.residuals(records, [1.0, 3.0]))
    assert pinned.jacobian(records, [3.0]).shape == (7, 1, 1)


def test_stacked_problem_orders_residuals_by_record():
    linear = linear_iv_problem(1)
    quantile = quantile_iv_problem(0.5, SmoothingConfig(0.1))
    problem = stack_problems(linear, quantile)
    data = Dataset.from_records(problem, CounterRng(9).normal((4, 3)))
    theta = np.array([0.8])
    residuals = residual_matrix(problem, data, theta)
    assert problem.m == 2 and residuals.shape == (4, 2)
    assert_allclose(residuals[:, 0], linear.residuals(data.records, theta)[:, 0])
    flat = stacked_residuals(problem, data, theta)
    assert_allclose(flat[1::2], residuals[:, 1])
    assert stacked_jacobian(problem, data, theta).shape == (8, 1)


def test_dataset_projects_instruments():
    problem = linear_iv_problem(1, instrument_dim=2)
    data = Dataset.from_records(problem, CounterRng(1).normal((5, 4)))
    assert data.n == 5 and data.instrument_dim == 2
    subset = data.take([0, 2])
    assert subset.n == 2
    assert_array_equal(subset.instruments, data.instruments[[0, 2]])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
