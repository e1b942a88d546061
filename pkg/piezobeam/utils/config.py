import os
import copy
import json
import logging
from dotenv import load_dotenv

from ..errors import ConfigError, FileFormat, InvalidParameter
from .io import write_json

logger = logging.getLogger('piezobeam')

# Reference material block and the canonical run used by the experiments
DEFAULT_RUN_CONFIG = {
    "material": {
        "rho": 6000.0,
        "mu": 1e-6,
        "alpha": 1e9,
        "beta": 1e12,
        "gamma": 1e-3,
        "L": 1.0
    },
    "control": {
        "k1": 1e6,
        "k2": 1e6
    },
    "grid": {
        "scheme": "orfd",
        "N": 80
    },
    "filter": {
        "j_star": 0,
        "epsilon_probe": None,
        "tol_eps": "auto"
    },
    "simulation": {
        "T_final": 0.1,
        "samples": 400,
        "ic": "high_frequency",
        "snapshot_count": 0
    },
    "output": {
        "dir": "results",
        "csv": None,
        "snapshots": None
    }
}

REQUIRED_MATERIAL_KEYS = ("rho", "mu", "alpha", "beta", "gamma", "L")

_NUMBER = (int, float)
_OPTIONAL_NUMBER = (int, float, type(None))
_OPTIONAL_STR = (str, type(None))

# Allowed keys and types per block
SCHEMA = {
    "material": {"rho": _NUMBER, "mu": _NUMBER, "alpha": _NUMBER, "beta": _NUMBER,
                 "gamma": _NUMBER, "L": _NUMBER, "k1": _NUMBER, "k2": _NUMBER},
    "control": {"k1": _NUMBER, "k2": _NUMBER},
    "grid": {"scheme": (str,), "N": (int,)},
    "filter": {"j_star": (int,), "epsilon_probe": _OPTIONAL_NUMBER, "tol_eps": (int, float, str, type(None))},
    "simulation": {"T_final": _NUMBER, "samples": (int,), "ic": (str,), "snapshot_count": (int,)},
    "output": {"dir": _OPTIONAL_STR, "csv": _OPTIONAL_STR, "snapshots": _OPTIONAL_STR},
}


def load_config():
    """Load runtime settings from environment variables"""
    logger.debug("Loading environment variables from .env file...")
    load_dotenv()

    log_level = os.getenv('PIEZOBEAM_LOG_LEVEL', 'INFO')
    output_dir = os.getenv('PIEZOBEAM_OUTPUT_DIR', 'results')
    workers_text = os.getenv('PIEZOBEAM_WORKERS', '1')
    try:
        workers = int(workers_text)
    except ValueError:
        raise InvalidParameter(f"must be an integer, got {workers_text!r}", key_path='PIEZOBEAM_WORKERS')
    if workers < 1:
        raise InvalidParameter(f"must be at least 1, got {workers}", key_path='PIEZOBEAM_WORKERS')

    logger.debug(f"PIEZOBEAM_LOG_LEVEL: {log_level}")
    logger.debug(f"PIEZOBEAM_WORKERS: {workers}")
    logger.debug(f"PIEZOBEAM_OUTPUT_DIR: {output_dir}")

    return {
        'log_level': log_level,
        'workers': workers,
        'output_dir': output_dir
    }


def get_default_run_config():
    return copy.deepcopy(DEFAULT_RUN_CONFIG)


def load_run_config(path):
    """Read a JSON run configuration file.

    The material block must be complete; every other block falls back to
    the defaults key by key.
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except OSError as e:
        raise FileFormat(f"cannot read config file {path}: {e}", key_path='config')
    except json.JSONDecodeError as e:
        raise FileFormat(f"invalid JSON in {path}: {e}", key_path='config')
    if not isinstance(raw, dict):
        raise FileFormat(f"{path} must contain a JSON object", key_path='config')

    material = raw.get("material")
    if not isinstance(material, dict):
        raise ConfigError("missing required block", key_path='material')
    for key in REQUIRED_MATERIAL_KEYS:
        if key not in material:
            raise ConfigError("missing required key", key_path=f"material.{key}")

    # Gains may sit in the material block; the control block wins when both are given
    control = raw.setdefault("control", {})
    if not isinstance(control, dict):
        raise ConfigError("must be an object", key_path='control')
    for key in ("k1", "k2"):
        if key in material:
            value = material.pop(key)
            control.setdefault(key, value)

    config = merge_overrides(get_default_run_config(), raw)
    validate_run_config(config)
    logger.debug(f"Loaded run config from {path}")
    return config


def merge_overrides(config, overrides):
    """Return config with the non-None values of a nested overrides dict applied."""
    merged = copy.deepcopy(config)
    for block, values in (overrides or {}).items():
        if block not in SCHEMA:
            raise ConfigError("unknown block", key_path=block)
        if not isinstance(values, dict):
            raise ConfigError("must be an object", key_path=block)
        for key, value in values.items():
            if key not in SCHEMA[block]:
                raise ConfigError("unknown key", key_path=f"{block}.{key}")
            if value is None and merged[block].get(key) is not None:
                continue
            merged[block][key] = value
    return merged


def _check_type(path, value, types):
    if isinstance(value, bool) or not isinstance(value, types):
        names = '/'.join(t.__name__ for t in types)
        raise InvalidParameter(f"expected {names}, got {value!r}", key_path=path)


def validate_run_config(config):
    """Strict schema check: unknown keys, types and ranges."""
    for block, values in config.items():
        if block not in SCHEMA:
            raise ConfigError("unknown block", key_path=block)
        for key, value in values.items():
            if key not in SCHEMA[block]:
                raise ConfigError("unknown key", key_path=f"{block}.{key}")
            _check_type(f"{block}.{key}", value, SCHEMA[block][key])

    for block in SCHEMA:
        if block not in config:
            raise ConfigError("missing required block", key_path=block)
    for key in REQUIRED_MATERIAL_KEYS:
        if key not in config["material"]:
            raise ConfigError("missing required key", key_path=f"material.{key}")

    for key in ("k1", "k2"):
        if config["control"].get(key, 0) < 0:
            raise InvalidParameter("must be nonnegative", key_path=f"control.{key}")
    if config["grid"]["scheme"].lower() not in ("fem", "orfd"):
        raise InvalidParameter(f"must be 'fem' or 'orfd', got {config['grid']['scheme']!r}",
                               key_path='grid.scheme')
    if config["grid"]["N"] < 1:
        raise InvalidParameter("must be at least 1", key_path='grid.N')
    if config["filter"]["j_star"] < 0:
        raise InvalidParameter("must be nonnegative", key_path='filter.j_star')
    tol = config["filter"]["tol_eps"]
    if isinstance(tol, str) and tol != "auto":
        raise InvalidParameter(f"must be a number or 'auto', got {tol!r}", key_path='filter.tol_eps')
    if config["simulation"]["T_final"] < 0:
        raise InvalidParameter("must be nonnegative", key_path='simulation.T_final')
    if config["simulation"]["samples"] < 1:
        raise InvalidParameter("must be at least 1", key_path='simulation.samples')
    return config


def material_from_config(config):
    """MaterialParams from the material block with gains from the control block."""
    from ..params import MaterialParams

    material = dict(config["material"])
    gains = {key: material.pop(key) for key in ("k1", "k2") if key in material}
    gains.update({key: value for key, value in config.get("control", {}).items() if value is not None})
    return MaterialParams(**{key: float(value) for key, value in material.items()},
                          k1=float(gains.get("k1", 0.0)), k2=float(gains.get("k2", 0.0)))


def tolerance_from_config(config):
    tol = config["filter"]["tol_eps"]
    return None if tol in (None, "auto") else float(tol)


def save_run_config(config, path):
    """Save the effective configuration next to the artifacts."""
    try:
        write_json(path, config)
        return True
    except Exception as e:
        logger.error(f"Error saving run config to {path}: {e}")
        return False
