#!/usr/bin/env python3

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.errors import ConfigError
from src.estimators import (
    MinimaxConfig,
    MlpNetwork,
    RegularizerChoice,
    architecture,
    assemble,
    fit_adversary,
    k_step_neural_vmm,
    mlp_backward,
    mlp_forward,
    nvmm_game_value,
    nvmm_gradients,
    objective,
    train_neural_vmm,
)
from src.kernels import KernelSpec
from src.moments import Dataset, linear_iv_problem
from src.numerics import CounterRng, central_difference
from src.pipeline import EstimatorConfig, fit_estimator
from tests.helpers import IDENTITY_KERNEL, iv_dataset, single_record

SMALL = MinimaxConfig(iterations=30, depth=1, width=6, adversary_lr=0.05, theta_lr=0.1)


def _spaced_dataset(n: int = 15, seed: int = 0):
    rng = CounterRng(seed)
    z = np.linspace(-2.0, 2.0, n)
    t = z + 0.5 * rng.normal(n)
    problem = linear_iv_problem(1)
    return problem, Dataset.from_records(problem, np.column_stack([z, t, 1.5 * t + rng.normal(n)]))


def test_zero_network_outputs_zero():
    net = MlpNetwork.zeros([2, 4, 1])
    assert_array_equal(mlp_forward(net, np.ones((3, 2))).output, np.zeros((3, 1)))
    problem, data = iv_dataset(10)
    net = MlpNetwork.zeros([1, 4, 1])
    assert nvmm_game_value(net, problem, data, [0.3], [0.0], RegularizerChoice('frobenius', alpha=0.1)) == 0.0


def test_single_affine_layer():
    w = np.array([[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]])
    b = np.array([0.1, 0.2, 0.3])
    net = MlpNetwork((w,), (b,))
    z = np.array([[1.0, -1.0], [0.5, 2.0]])
    assert_allclose(mlp_forward(net, z).output, z @ w.T + b)
    assert net.widths == [2, 3] and net.parameter_count == 9


def test_parameters_round_trip_through_the_flat_vector():
    net = MlpNetwork.initialize(architecture(2, 1, depth=2, width=4), CounterRng(1))
    assert_array_equal(net.with_parameters(net.flatten()).flatten(), net.flatten())


def test_backward_matches_finite_differences():
    rng = CounterRng(2)
    net = MlpNetwork.initialize([2, 4, 3, 1], rng)
    z = rng.normal((6, 2))
    upstream = rng.normal((6, 1))

    def scalar(flat):
        return float(np.sum(upstream * mlp_forward(net.with_parameters(flat), z).output))

    analytic = mlp_backward(net, mlp_forward(net, z), upstream).flatten()
    numeric = central_difference(scalar, net.flatten(), step=1e-6)
    assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


def test_game_value_by_hand():
    problem, data = single_record(0.0, 1.0, 2.0)
    net = MlpNetwork((np.zeros((1, 1)),), (np.array([0.5]),))
    # f = 0.5, rho(1) = 1, rho(0) = 2: 0.5 - (0.5 * 2)^2 / 4 - 0.2 / 4 * 0.25
    expected = 0.2375
    frobenius = RegularizerChoice('frobenius', alpha=0.2)
    kernel = RegularizerChoice('kernel', alpha=0.2, kernels=KernelSpec(bandwidth=1.0))
    assert nvmm_game_value(net, problem, data, [1.0], [0.0], frobenius) == pytest.approx(expected)
    assert nvmm_game_value(net, problem, data, [1.0], [0.0], kernel) == pytest.approx(expected)
    assert nvmm_game_value(net, problem, data, [1.0], [0.0], RegularizerChoice('none')) == pytest.approx(0.25)


def test_unit_frobenius_weights_match_an_identity_gram():
    problem = linear_iv_problem(1)
    data = Dataset.from_records(problem, np.array([[0.0, 1.0, 1.0], [1.0, 2.0, 2.5], [2.0, -1.0, 0.0]]))
    net = MlpNetwork.initialize([1, 5, 1], CounterRng(3))
    kernel = nvmm_game_value(net, problem, data, [0.4], [0.1],
                             RegularizerChoice('kernel', alpha=0.1, kernels=IDENTITY_KERNEL))
    frobenius = nvmm_game_value(net, problem, data, [0.4], [0.1], RegularizerChoice('frobenius', alpha=0.1))
    assert kernel == pytest.approx(frobenius, rel=1e-12)


def test_gradients_match_finite_differences():
    problem, data = iv_dataset(12, seed=5)
    net = MlpNetwork.initialize([1, 6, 1], CounterRng(5))
    reg = RegularizerChoice('frobenius', alpha=0.1)
    value, grad_theta, grad_net = nvmm_gradients(net, problem, data, [0.7], [0.2], reg)
    numeric_theta = central_difference(lambda th: nvmm_game_value(net, problem, data, th, [0.2], reg), np.array([0.7]))
    assert_allclose(grad_theta, numeric_theta, rtol=1e-6, atol=1e-9)
    numeric_net = central_difference(
        lambda flat: nvmm_game_value(net.with_parameters(flat), problem, data, [0.7], [0.2], reg),
        net.flatten(), step=1e-6)
    assert_allclose(grad_net.flatten(), numeric_net, rtol=1e-4, atol=1e-7)


def test_neural_adversary_never_beats_the_kernel_closed_form():
    problem, data = _spaced_dataset()
    spec = KernelSpec(bandwidth=0.2)
    alpha = 0.05
    reg = RegularizerChoice('kernel', alpha=alpha, kernels=spec)
    theta, prior = np.array([0.6]), np.array([0.0])
    closed_form = objective(assemble(problem, data, spec, prior, alpha), problem, data, theta)
    for seed in range(10):
        net = MlpNetwork.initialize([1, 8, 1], CounterRng(seed))
        assert nvmm_game_value(net, problem, data, theta, prior, reg) <= closed_form + 1e-8 * (1 + closed_form)
    trained, value = fit_adversary(MlpNetwork.initialize([1, 8, 8, 1], CounterRng(99)), problem, data,
                                   theta, prior, reg, max_iter=300)
    assert value <= closed_form + 1e-8 * (1 + closed_form)
    assert value > 0.0


def _grid_network(z: np.ndarray) -> MlpNetwork:
    """One hidden unit per sample with a kink between neighbours, so the features have full rank"""
    n = z.size
    return MlpNetwork((np.ones((n, 1)), CounterRng(4).normal((1, n))), (0.5 - z, np.zeros(1)))


def test_full_rank_adversary_reaches_the_closed_form():
    rng = CounterRng(8)
    z = np.arange(10.0)
    t = 0.1 * z + rng.normal(10)
    problem = linear_iv_problem(1)
    data = Dataset.from_records(problem, np.column_stack([z, t, 0.5 * t + rng.normal(10)]))
    spec, alpha = KernelSpec(bandwidth=1.0), 0.1
    reg = RegularizerChoice('kernel', alpha=alpha, kernels=spec)
    theta, prior = np.array([0.2]), np.array([0.0])
    closed_form = objective(assemble(problem, data, spec, prior, alpha), problem, data, theta)
    best, value = fit_adversary(_grid_network(z), problem, data, theta, prior, reg, max_iter=20)
    assert 0.0 <= value <= closed_form + 1e-8 * max(1.0, closed_form)
    assert value == pytest.approx(closed_form, rel=1e-6)
    assert value == pytest.approx(nvmm_game_value(best, problem, data, theta, prior, reg), rel=1e-12)


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_adversary_never_scores_below_the_zero_network(seed):
    problem, data = _spaced_dataset(seed=seed)
    # a wide bandwidth makes the gram nearly singular and the penalty dominate
    reg = RegularizerChoice('kernel', alpha=1e-3, kernels=KernelSpec(bandwidth=2.0))
    net = MlpNetwork.initialize([1, 20, 20, 1], CounterRng(seed))
    _, value = fit_adversary(net, problem, data, [0.6], [0.0], reg, max_iter=5)
    assert value >= 0.0


def test_initial_pre_activations_avoid_exact_zeros():
    rng = CounterRng(2)
    net = MlpNetwork.initialize([2, 4, 3, 1], rng)
    assert all(np.all(b != 0.0) for b in net.biases[:-1])
    forward = mlp_forward(net, np.zeros((3, 2)))
    assert all(np.all(a != 0.0) for a in forward.pre_activations[:-1])
    zeroed = MlpNetwork.initialize([2, 4, 1], rng, zero_output=True)
    assert_array_equal(mlp_forward(zeroed, rng.normal((5, 2))).output, np.zeros((5, 1)))


def test_training_is_deterministic():
    problem, data = iv_dataset(40)
    reg = RegularizerChoice('frobenius', alpha=0.05)
    first = train_neural_vmm(problem, data, [0.0], [0.0], reg, SMALL)
    second = train_neural_vmm(problem, data, [0.0], [0.0], reg, SMALL)
    assert_array_equal(first.theta, second.theta)
    assert len(first.game_values) == SMALL.iterations


def test_minibatches_train_with_the_frobenius_regularizer():
    problem, data = iv_dataset(40)
    config = MinimaxConfig(iterations=10, depth=1, width=4, batch_size=16)
    solution = train_neural_vmm(problem, data, [0.0], [0.0], RegularizerChoice('frobenius'), config)
    assert np.all(np.isfinite(solution.theta))


def test_kernel_regularizer_needs_the_full_batch():
    problem, data = iv_dataset(40)
    config = MinimaxConfig(iterations=10, batch_size=16)
    with pytest.raises(ConfigError):
        train_neural_vmm(problem, data, [0.0], [0.0], RegularizerChoice('kernel'), config)


def test_k_step_keeps_every_stage():
    problem, data = iv_dataset(30)
    solution = k_step_neural_vmm(problem, data, 2, [0.0], RegularizerChoice('none'), SMALL)
    assert len(solution.trace) == 2
    assert len(solution.game_values) == 2 * SMALL.iterations


def test_pipeline_reports_plug_in_inference():
    problem, data = iv_dataset(60)
    config = EstimatorConfig(name='neural-vmm', k=1, minimax=SMALL, regularizer=RegularizerChoice('frobenius'))
    fit = fit_estimator(problem, data, config)
    assert fit.report is not None and fit.report.method == 'efficient'
    assert len(fit.diagnostics['trace']) == 1


@pytest.mark.slow
def test_noiseless_design_is_identified():
    problem, data = iv_dataset(100, noise=0.0)
    config = MinimaxConfig(solver='lbfgs', depth=1, width=10, adversary_max_iter=200)
    solution = train_neural_vmm(problem, data, [0.0], [0.0], RegularizerChoice('kernel'), config)
    assert solution.theta[0] == pytest.approx(1.5, abs=0.05)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
