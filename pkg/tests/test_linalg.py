#!/usr/bin/env python3

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import AllJittersFailed
from src.numerics import default_jitter_schedule, spd_factor, spd_solve


def test_zero_matrix_takes_the_jitter_path(caplog):
    with caplog.at_level(logging.WARNING):
        factor = spd_factor(np.zeros((3, 3)), jitter_schedule=[0.0, 1e-8])
    assert factor.jitter_used == 1e-8
    assert_allclose(factor.reconstruct(), 1e-8 * np.eye(3), rtol=1e-12)
    assert "Added jitter" in caplog.text


def test_zero_matrix_without_a_positive_jitter_fails():
    with pytest.raises(AllJittersFailed):
        spd_factor(np.zeros((2, 2)), jitter_schedule=[0.0])


def test_two_by_two_factor():
    factor = spd_factor(np.array([[4.0, 2.0], [2.0, 3.0]]))
    assert factor.jitter_used == 0.0
    assert_allclose(factor.lower, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], rtol=1e-14)
    assert_allclose(spd_solve(factor, np.array([6.0, 5.0])), [1.0, 1.0], rtol=1e-12)


def test_asymmetric_input_is_symmetrized():
    factor = spd_factor(np.array([[4.0, 1.0], [3.0, 3.0]]))
    assert_allclose(factor.reconstruct(), [[4.0, 2.0], [2.0, 3.0]], rtol=1e-14)


def test_zero_trace_keeps_unit_jitter_scale():
    assert default_jitter_schedule(np.zeros((2, 2)), [0.0, 1e-8]) == [0.0, 1e-8]
    assert default_jitter_schedule(np.diag([2.0, 4.0]), [0.0, 1e-8]) == pytest.approx([0.0, 3e-8])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
