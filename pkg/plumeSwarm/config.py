"""
Settings loading for plume-swarm.

Settings are YAML documents (JSON works too, being a YAML subset). A user
file only needs the keys it changes; everything else comes from the
packaged defaults.
"""

import copy
import logging
import os
import shutil
from typing import Any, Dict, Iterable, List, Optional

import yaml

from .errors import ConfigError
from .locus import LocusParams
from .mobs import MobsParams
from .plume import PlumeParams
from .sim import ALGORITHMS, PLUME_VARIANTS, FailureModel, TrialConfig
from .tree import TreeParams

logger = logging.getLogger(__name__)

PACKAGE_CONFIG = os.path.join(os.path.dirname(__file__), 'config', 'settings.yaml')

# Failure probabilities an experiment may sweep, besides zero
PROBABILITY_RANGE = (1e-6, 1e-1)

SIM_KEYS = ("speed", "dt", "tick_budget", "altitude", "arrival_tolerance", "success_radius", "record_waypoints")


def load_config(config_path: str) -> Optional[Dict[str, Any]]:
    """
    Load configuration from a YAML file.

    Args:
        config_path: Path to configuration file

    Returns:
        Configuration dictionary or None if loading failed
    """
    try:
        if not os.path.exists(config_path):
            logger.warning(f"Configuration file not found: {config_path}")
            return None
        with open(config_path, 'r') as file:
            config = yaml.safe_load(file) or {}
    except (OSError, yaml.YAMLError) as e:
        logger.warning(f"Error loading configuration {config_path}: {e}")
        return None
    if not isinstance(config, dict):
        logger.warning(f"Ignoring {config_path}: top level is not a mapping")
        return None
    config_type = "default" if os.path.abspath(config_path) == os.path.abspath(PACKAGE_CONFIG) else "user"
    logger.info(f"Loaded {config_type} configuration from {os.path.basename(os.path.dirname(config_path))}/"
                f"{os.path.basename(config_path)}")
    return config


def merge_settings(base: Dict[str, Any], override: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """Deep-merge `override` over a copy of `base`."""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_settings(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def default_settings() -> Dict[str, Any]:
    settings = load_config(PACKAGE_CONFIG)
    if settings is None:
        raise ConfigError(f"Packaged settings are missing: {PACKAGE_CONFIG}")
    return settings


def load_settings(config_path: Optional[str] = None) -> Dict[str, Any]:
    """Packaged defaults overlaid with the user file, if one loads."""
    settings = default_settings()
    path = config_path or get_default_config_path()
    if os.path.abspath(path) == os.path.abspath(PACKAGE_CONFIG):
        return settings
    user = load_config(path)
    if user is None and config_path is not None:
        raise ConfigError(f"Cannot load configuration file {config_path}")
    return merge_settings(settings, user)


def ensure_user_config_exists() -> str:
    """
    Ensures user config file exists by copying the default if needed.

    Returns:
        Path to the user config file
    """
    user_config_dir = os.path.join(os.getcwd(), 'config')
    user_config = os.path.join(user_config_dir, 'settings.yaml')
    if not os.path.exists(user_config):
        os.makedirs(user_config_dir, exist_ok=True)
        shutil.copy2(PACKAGE_CONFIG, user_config)
        logger.info(f"Created new user config at {user_config}")
    return os.path.abspath(user_config)


def get_default_config_path() -> str:
    """Get the path to the configuration file to use when none is given."""
    current_dir = os.getcwd()
    user_config = os.path.join(current_dir, 'config', 'settings.yaml')
    if os.path.exists(user_config):
        return os.path.abspath(user_config)

    # One level up, when run from inside the project directory
    parent_config = os.path.join(os.path.dirname(current_dir), 'config', 'settings.yaml')
    if os.path.exists(parent_config):
        return os.path.abspath(parent_config)

    return os.path.abspath(PACKAGE_CONFIG)


def _section(settings: Dict[str, Any], name: str) -> Dict[str, Any]:
    section = settings.get(name) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"Settings section '{name}' must be a mapping")
    return dict(section)


def _build(factory, values: Dict[str, Any], name: str):
    try:
        return factory(**values)
    except TypeError as e:
        raise ConfigError(f"Invalid '{name}' settings: {e}") from e


def trial_config(settings: Dict[str, Any], **overrides: Any) -> TrialConfig:
    """
    Build a validated TrialConfig from settings plus per-trial overrides.

    Args:
        settings: Merged settings dictionary
        **overrides: algorithm, n, plume_variant, p_generic, p_inplume,
            tick_budget or record_waypoints

    Raises:
        ConfigError: If any value is invalid
    """
    plume_values = _section(settings, "plume")
    source_radius = plume_values.pop("source_radius", 100.0)
    sim_values = {k: v for k, v in _section(settings, "sim").items() if k in SIM_KEYS}

    failure = _build(FailureModel, {
        "p_generic": float(overrides.pop("p_generic", 0.0) or 0.0),
        "p_inplume": float(overrides.pop("p_inplume", 0.0) or 0.0),
    }, "failure")
    overrides = {k: v for k, v in overrides.items() if v is not None}
    sim_values.update({k: overrides.pop(k) for k in list(overrides) if k in SIM_KEYS})

    return _build(TrialConfig, dict(
        tree=_build(TreeParams, _section(settings, "tree"), "tree"),
        plume=_build(PlumeParams, plume_values, "plume"),
        locus=_build(LocusParams, _section(settings, "locus"), "locus"),
        mobs=_build(MobsParams, _section(settings, "mobs"), "mobs"),
        source_radius=float(source_radius),
        failure=failure,
        **sim_values,
        **overrides,
    ), "trial")


def validate_probabilities(values: Iterable[float], name: str) -> List[float]:
    """Probabilities of an experiment sweep: zero or within [1e-6, 1e-1]."""
    result = []
    low, high = PROBABILITY_RANGE
    for value in values:
        try:
            value = float(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{name} value {value!r} is not a number") from e
        if value != 0.0 and not low * (1 - 1e-9) <= value <= high * (1 + 1e-9):
            raise ConfigError(f"{name} value {value:g} must be 0 or within [{low:g}, {high:g}]")
        result.append(value)
    if not result:
        raise ConfigError(f"{name} must list at least one probability")
    return result


def experiment_settings(settings: Dict[str, Any]) -> Dict[str, Any]:
    """The `experiment` section with defaults filled in and values checked."""
    section = _section(settings, "experiment")
    try:
        result = {
            "trials": int(section.get("trials", 100)),
            "seed": int(section.get("seed", 0)),
            "workers": int(section.get("workers", 1)),
            "out": str(section.get("out", "results")),
            "algorithms": list(section.get("algorithms", ["locus", "mobs"])),
            "swarm_sizes": [int(n) for n in section.get("swarm_sizes", [5, 10, 20])],
            "plume_variants": list(section.get("plume_variants", ["smooth"])),
            "p_generic": validate_probabilities(section.get("p_generic", [0.0]), "p_generic"),
            "p_inplume": validate_probabilities(section.get("p_inplume", [0.0]), "p_inplume"),
        }
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid 'experiment' settings: {e}") from e
    if result["trials"] < 1:
        raise ConfigError(f"trials must be at least 1, got {result['trials']}")
    if result["workers"] < 1:
        raise ConfigError(f"workers must be at least 1, got {result['workers']}")
    for algorithm in result["algorithms"]:
        if algorithm not in ALGORITHMS:
            raise ConfigError(f"Unknown algorithm '{algorithm}'")
    for variant in result["plume_variants"]:
        if variant not in PLUME_VARIANTS:
            raise ConfigError(f"Unknown plume variant '{variant}'")
    if any(n < 1 for n in result["swarm_sizes"]):
        raise ConfigError("swarm_sizes must all be at least 1")
    return result
