import logging
import os
from typing import Any, Dict, List

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20201201
DEFAULT_JITTER_LEVELS = "0,1e-12,1e-10,1e-8,1e-6"


def _parse_levels(raw: str) -> List[float]:
    return [float(part) for part in raw.split(',') if part.strip()]


def load_settings() -> Dict[str, Any]:
    """Collects process-level defaults from the environment (.env is loaded by the entry point)"""
    return {
        'logging': {
            'level': os.getenv('VMM_LOG_LEVEL', 'INFO').upper(),
            'file': os.getenv('VMM_LOG_FILE') or None,
        },
        'runtime': {
            'max_workers': int(os.getenv('VMM_MAX_WORKERS', os.cpu_count() or 1)),
            'default_seed': int(os.getenv('VMM_DEFAULT_SEED', DEFAULT_SEED)),
        },
        'numerics': {
            # relative to tr(A)/dim, first entry is the unjittered attempt
            'jitter_levels': _parse_levels(os.getenv('VMM_JITTER_LEVELS', DEFAULT_JITTER_LEVELS)),
        },
    }


def validate_settings(settings: Dict[str, Any]) -> bool:
    """Checks the loaded settings, logging every problem found"""
    ok = True
    if settings['logging']['level'] not in logging._nameToLevel:
        logger.error(f"❌ VMM_LOG_LEVEL '{settings['logging']['level']}' is not a logging level")
        ok = False
    if settings['runtime']['max_workers'] < 1:
        logger.error("❌ VMM_MAX_WORKERS must be at least 1")
        ok = False
    levels = settings['numerics']['jitter_levels']
    if not levels or any(x < 0 for x in levels) or levels != sorted(levels):
        logger.error("❌ VMM_JITTER_LEVELS must be a non-empty ascending list of non-negative numbers")
        ok = False
    return ok
