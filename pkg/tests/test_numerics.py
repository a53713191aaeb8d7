#!/usr/bin/env python3

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.errors import AllJittersFailed, DimensionMismatch
from src.numerics import (
    CounterRng,
    central_difference,
    derive_seed,
    relative_error,
    set_jitter_levels,
    spd_factor,
    spd_inverse,
    spd_solve,
    variational_quadratic,
    variational_value,
)


def _spd(rng, dim):
    a = rng.normal((dim, dim))
    return a @ a.T + dim * np.eye(dim)


def test_spd_factor_reconstructs_without_jitter():
    a = _spd(CounterRng(1), 5)
    factor = spd_factor(a)
    assert factor.jitter_used == 0.0
    assert_allclose(factor.reconstruct(), a, rtol=1e-12, atol=1e-12)
    assert_allclose(spd_inverse(factor) @ a, np.eye(5), atol=1e-10)


def test_singular_psd_matrix_gets_jitter():
    a = np.ones((3, 3))
    factor = spd_factor(a)
    assert_allclose(factor.reconstruct(), a + factor.jitter_used * np.eye(3), atol=1e-10)


def test_negative_definite_matrix_fails_every_jitter():
    with pytest.raises(AllJittersFailed):
        spd_factor(-np.eye(3))


def test_jitter_schedule_must_ascend():
    with pytest.raises(ValueError):
        spd_factor(np.eye(2), jitter_schedule=[1e-6, 0.0])


def test_configured_levels_are_used():
    set_jitter_levels([0.0, 0.5])
    factor = spd_factor(np.diag([1.0, 0.0]))
    # tr/dim = 0.5 so the second level adds 0.25
    assert factor.jitter_used == pytest.approx(0.25)


def test_spd_solve_rejects_wrong_dimension():
    factor = spd_factor(np.eye(3))
    with pytest.raises(DimensionMismatch):
        spd_solve(factor, np.ones(4))


def test_variational_quadratic_is_the_supremum():
    rng = CounterRng(3)
    c = _spd(rng, 4)
    h = rng.normal(4)
    alpha = 0.3
    best = variational_quadratic(c, alpha, h)
    v_star = 2.0 * np.linalg.solve(c + alpha * np.eye(4), h)
    assert variational_value(c, alpha, h, v_star) == pytest.approx(best, rel=1e-10)
    for _ in range(20):
        assert variational_value(c, alpha, h, v_star + rng.normal(4)) <= best + 1e-12


def test_variational_quadratic_needs_positive_alpha():
    with pytest.raises(ValueError):
        variational_quadratic(np.eye(2), 0.0, np.ones(2))


def test_central_difference_of_a_quadratic():
    theta = np.array([0.3, -1.2])
    grad = central_difference(lambda x: float(np.sum(x ** 2)), theta)
    assert_allclose(grad, 2 * theta, atol=1e-8)
    assert relative_error(grad, 2 * theta) < 1e-8


def test_counter_rng_matches_splitmix64():
    # first splitmix64 output for seed 0
    assert int(CounterRng(0).raw(1)[0]) == 0xE220A8397B1DCDAF


def test_streams_are_reproducible_and_order_free():
    first = CounterRng(42).normal(10)
    again = CounterRng(42).normal(10)
    assert_array_equal(first, again)

    parent = CounterRng(42)
    late = parent.spawn(3).uniform(5)
    parent.uniform(100)
    assert_array_equal(parent.spawn(3).uniform(5), late)
    assert not np.array_equal(CounterRng(42).spawn(3).uniform(5), CounterRng(42).spawn(4).uniform(5))


def test_derive_seed_depends_on_index_order():
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
    assert derive_seed(1, 2) == derive_seed(1, 2)


def test_uniform_and_normal_moments():
    rng = CounterRng(11)
    u = rng.uniform(20000)
    assert np.all((u > 0) & (u < 1))
    assert abs(u.mean() - 0.5) < 0.01
    z = rng.normal(20000)
    assert abs(z.mean()) < 0.05
    assert abs(z.var() - 1.0) < 0.05


def test_integers_stay_in_range():
    draws = CounterRng(5).integers(2, 7, 1000)
    assert draws.min() >= 2 and draws.max() <= 6
    assert set(draws.tolist()) == {2, 3, 4, 5, 6}


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
