from .linalg import (
    DEFAULT_JITTER_LEVELS,
    SpdFactor,
    default_jitter_schedule,
    set_jitter_levels,
    spd_factor,
    spd_inverse,
    spd_solve,
    symmetrize,
    variational_quadratic,
    variational_value,
)
from .differences import central_difference, relative_error
from .rng import CounterRng, derive_seed

__all__ = [
    'DEFAULT_JITTER_LEVELS', 'SpdFactor', 'default_jitter_schedule', 'set_jitter_levels', 'spd_factor',
    'spd_inverse', 'spd_solve', 'symmetrize', 'variational_quadratic', 'variational_value',
    'central_difference', 'relative_error', 'CounterRng', 'derive_seed',
]
