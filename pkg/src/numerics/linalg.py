"""Dense symmetric linear algebra: jittered Cholesky factorization and solves.

Every factorization goes through :func:`spd_factor`, which tries an ascending
jitter schedule and records the first level that produced a positive-definite
factor. The default schedule is relative to ``tr(A)/dim`` so it is dimensionless.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from ..errors import AllJittersFailed, DimensionMismatch

logger = logging.getLogger(__name__)

DEFAULT_JITTER_LEVELS = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)

_jitter_levels = list(DEFAULT_JITTER_LEVELS)


@dataclass(frozen=True)
class SpdFactor:
    """Lower Cholesky factor of ``A + jitter_used * I``"""
    lower: np.ndarray
    jitter_used: float

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


def symmetrize(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    return (a + a.T) / 2.0


def set_jitter_levels(levels: Sequence[float]) -> None:
    """Replaces the process-wide relative jitter levels (see VMM_JITTER_LEVELS)"""
    global _jitter_levels
    _jitter_levels = [float(x) for x in levels]


def default_jitter_schedule(a: np.ndarray, levels: Optional[Sequence[float]] = None) -> list:
    """Scales relative jitter levels by tr(A)/dim (by 1 when the trace vanishes)"""
    if levels is None:
        levels = _jitter_levels
    a = np.asarray(a, dtype=float)
    scale = float(np.trace(a)) / a.shape[0] if a.shape[0] else 1.0
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    return [level * scale for level in levels]


def spd_factor(a: np.ndarray, jitter_schedule: Optional[Sequence[float]] = None) -> SpdFactor:
    """Factorizes the symmetrized ``a`` with the first jitter that yields a PD factor"""
    a = symmetrize(a)
    if jitter_schedule is None:
        jitter_schedule = default_jitter_schedule(a)
    schedule = [float(j) for j in jitter_schedule]
    if not schedule:
        raise ValueError("jitter schedule must not be empty")
    if any(j < 0 for j in schedule) or schedule != sorted(schedule):
        raise ValueError("jitter schedule must be ascending and non-negative")
    if not np.all(np.isfinite(a)):
        raise AllJittersFailed("matrix has non-finite entries")

    eye = np.eye(a.shape[0])
    for jitter in schedule:
        try:
            lower = linalg.cholesky(a + jitter * eye, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(lower)) or np.any(np.diag(lower) <= 0.0):
            continue
        if jitter > 0.0:
            logger.warning(f"⚠️ Added jitter {jitter:.3e} to factorize a {a.shape[0]}x{a.shape[0]} matrix")
        return SpdFactor(lower=lower, jitter_used=jitter)

    raise AllJittersFailed(
        f"no jitter in {schedule} made the {a.shape[0]}x{a.shape[0]} matrix positive definite"
    )


def spd_solve(factor: SpdFactor, b: np.ndarray) -> np.ndarray:
    """Solves ``(A + jitter I) x = b`` for a vector or a matrix of right-hand sides"""
    b = np.asarray(b, dtype=float)
    if b.ndim not in (1, 2) or b.shape[0] != factor.dim:
        raise DimensionMismatch(f"right-hand side of shape {b.shape} does not match dimension {factor.dim}")
    return linalg.cho_solve((factor.lower, True), b, check_finite=False)


def spd_inverse(factor: SpdFactor) -> np.ndarray:
    return symmetrize(spd_solve(factor, np.eye(factor.dim)))


def variational_value(c: np.ndarray, alpha: float, h: np.ndarray, v: np.ndarray) -> float:
    """<h, v> - 1/4 <(C + alpha I) v, v>"""
    c = symmetrize(c)
    v = np.asarray(v, dtype=float)
    return float(np.dot(h, v) - 0.25 * v @ (c @ v + alpha * v))


def variational_quadratic(c: np.ndarray, alpha: float, h: np.ndarray) -> float:
    """h^T (C + alpha I)^{-1} h, the supremum of :func:`variational_value` over v.

    The supremum is attained at ``v* = 2 (C + alpha I)^{-1} h``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    c = symmetrize(c)
    h = np.asarray(h, dtype=float)
    if h.shape != (c.shape[0],):
        raise DimensionMismatch(f"vector of shape {h.shape} does not match dimension {c.shape[0]}")
    factor = spd_factor(c + alpha * np.eye(c.shape[0]))
    return float(h @ spd_solve(factor, h))
