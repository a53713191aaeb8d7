from typing import Callable

import numpy as np


def central_difference(fun: Callable[[np.ndarray], np.ndarray], theta: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference derivative of ``fun`` along each coordinate of ``theta``.

    The derivative axis is appended last, so a scalar function gives a gradient
    and an (n, m) valued one gives an (n, m, b) Jacobian.
    """
    theta = np.asarray(theta, dtype=float)
    columns = []
    for i in range(theta.size):
        shift = np.zeros_like(theta)
        shift[i] = step
        columns.append((np.asarray(fun(theta + shift)) - np.asarray(fun(theta - shift))) / (2.0 * step))
    return np.stack(columns, axis=-1)


def relative_error(actual, expected, floor: float = 1e-12) -> float:
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    scale = max(float(np.linalg.norm(expected)), floor)
    return float(np.linalg.norm(actual - expected)) / scale
