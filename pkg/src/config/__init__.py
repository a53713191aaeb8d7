from .settings import load_settings, validate_settings
from .run_config import RunConfig

__all__ = ['load_settings', 'validate_settings', 'RunConfig']
