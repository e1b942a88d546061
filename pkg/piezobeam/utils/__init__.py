from .logging import setup_logging, get_current_log_filename
from .config import load_config, load_run_config, validate_run_config, merge_overrides

__all__ = [
    'setup_logging',
    'get_current_log_filename',
    'load_config',
    'load_run_config',
    'validate_run_config',
    'merge_overrides',
]
