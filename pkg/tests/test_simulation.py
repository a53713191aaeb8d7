#!/usr/bin/env python3

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.kernels import KernelSpec
from src.moments import residual_matrix
from src.numerics import CounterRng
from src.pipeline import EstimatorConfig, fit_estimator
from src.simulation import (
    DgpSpec,
    chain_theta,
    compare_estimators,
    dgp_problem,
    efficient_variance,
    outcomes_from_frame,
    run_monte_carlo,
    sample_dgp,
    stationary_distribution,
    summarize,
    true_theta,
)

FAST = EstimatorConfig(name='owgmm', inference='gmm')


def test_sampling_is_deterministic():
    spec = DgpSpec(seed=12)
    assert_array_equal(sample_dgp(spec, 50).records, sample_dgp(spec, 50).records)
    assert not np.array_equal(sample_dgp(spec, 50).records, sample_dgp(DgpSpec(seed=13), 50).records)


def test_first_stage_covariance():
    data = sample_dgp(DgpSpec(rho_c=0.0, seed=1), 10000)
    z, t = data.records[:, 0], data.records[:, 1]
    assert np.cov(z, t)[0, 1] == pytest.approx(1.0, rel=0.05)


def test_noiseless_design_has_exact_outcomes():
    data = sample_dgp(DgpSpec(noiseless=True, theta0=(1.5,)), 100)
    assert_array_equal(data.records[:, 2], 1.5 * data.records[:, 1])


def test_quantile_design_puts_mass_p_below_the_structural_line():
    spec = DgpSpec(kind='quantile_iv', p=0.3, seed=2)
    data = sample_dgp(spec, 20000)
    below = np.mean(data.records[:, 2] <= 1.5 * data.records[:, 1])
    assert below == pytest.approx(0.3, abs=0.02)


def test_chain_stationary_frequencies():
    spec = DgpSpec(kind='density_ratio_chain', theta0=(1.0, 0.0), stay=(0.5, 0.5), seed=3)
    data = sample_dgp(spec, 20000)
    assert np.mean(data.records[:, 0]) == pytest.approx(0.5, abs=0.02)
    assert np.mean(data.records[:, 2]) == pytest.approx(0.5, abs=0.02)


def test_chain_ratio_has_unit_behavior_mean():
    spec = DgpSpec(kind='density_ratio_chain', theta0=(1.0, 0.0))
    d_b = stationary_distribution(spec.stay, spec.behavior)
    theta = chain_theta(spec)
    assert d_b[0] * theta[0] + d_b[1] * (theta[0] + theta[1]) == pytest.approx(1.0)
    assert_allclose(theta, [0.55, 0.9])


def test_spec_validation():
    with pytest.raises(ValueError):
        DgpSpec(kind='unknown')
    with pytest.raises(ValueError):
        DgpSpec(rho_c=1.0)
    with pytest.raises(ValueError):
        DgpSpec(behavior=(0.0, 0.5))
    with pytest.raises(ValueError):
        efficient_variance(DgpSpec(kind='quantile_iv'))
    assert_allclose(efficient_variance(DgpSpec(sigma=2.0, a=0.5)), [[16.0]])


def test_single_replication_summary():
    result = run_monte_carlo(DgpSpec(seed=4), FAST, n=80, reps=1)
    summary = result.summary
    outcome = result.outcomes[0]
    assert summary['bias'][0] == pytest.approx(outcome.theta[0] - 1.5)
    assert summary['scaled_variance'][0] == 0.0
    assert summary['rmse'][0] == pytest.approx(abs(outcome.theta[0] - 1.5))


def test_serial_and_parallel_runs_agree():
    serial = run_monte_carlo(DgpSpec(seed=5), FAST, n=60, reps=4, parallel=False)
    parallel = run_monte_carlo(DgpSpec(seed=5), FAST, n=60, reps=4, parallel=True, max_workers=2)
    assert_array_equal(serial.thetas(), parallel.thetas())
    assert serial.summary == parallel.summary


def test_summary_is_recomputable_from_the_frame():
    result = run_monte_carlo(DgpSpec(seed=6), FAST, n=60, reps=5)
    rebuilt = summarize(outcomes_from_frame(result.to_frame(), 1), result.theta0, result.n)
    assert rebuilt == result.summary


def test_noiseless_monte_carlo_is_unbiased():
    result = run_monte_carlo(DgpSpec(noiseless=True, seed=7), EstimatorConfig(k=1, inference='none'), n=60, reps=3)
    assert abs(result.summary['bias'][0]) <= 1e-6
    assert result.failed == 0


def test_failed_replications_are_counted():
    spec = DgpSpec(kind='density_ratio_chain', theta0=(1.0, 0.0), seed=8)
    result = run_monte_carlo(spec, EstimatorConfig(name='kernel-iv'), n=40, reps=2)
    assert result.failed == 2
    assert result.summary['failed'] == 2 and 'bias' not in result.summary


def test_identical_configs_compare_as_equal():
    comparison = compare_estimators(DgpSpec(seed=9), [FAST, FAST], n=60, reps=4)
    assert comparison.variance_ratios[1] == [1.0]
    assert comparison.rmse_differences[1] == [0.0]
    assert len(comparison.to_frame()) == 2


def test_density_ratio_estimate_is_normalized():
    spec = DgpSpec(kind='density_ratio_chain', theta0=(1.0, 0.0), seed=10)
    data = sample_dgp(spec, 400)
    problem = dgp_problem(spec)
    fit = fit_estimator(problem, data, EstimatorConfig(k=1, kernel=KernelSpec(bandwidth=1.0), inference='none'))
    ratio = problem.ratio_values(data.records[:, 0], fit.theta)
    assert np.mean(ratio) == pytest.approx(1.0)
    assert fit.diagnostics['pinned'] == {'index': 0, 'value': 1.0}
    assert residual_matrix(problem, data, fit.theta).shape == (400, 1)


@pytest.mark.slow
def test_density_ratio_is_consistent():
    spec = DgpSpec(kind='density_ratio_chain', theta0=(1.0, 0.0), seed=11)
    data = sample_dgp(spec, 2000)
    fit = fit_estimator(dgp_problem(spec), data, EstimatorConfig(k=2, inference='none'))
    assert_allclose(fit.theta, true_theta(spec), atol=0.15)


@pytest.mark.slow
def test_kernel_vmm_intervals_cover():
    result = run_monte_carlo(DgpSpec(seed=12), EstimatorConfig(k=2), n=300, reps=40)
    assert result.summary['coverage'][0] >= 0.8
    assert abs(result.summary['bias'][0]) < 0.1


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
