# src/config.py
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import ValidationError

from .exceptions import ConfigError
from .schemas.experiment_schemas import ExperimentConfig

# Load process settings from the repo-root .env (if present)
dotenv_path = os.path.join(os.path.dirname(__file__), "..", ".env")
load_dotenv(dotenv_path=dotenv_path)

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def log_level() -> str:
    return os.getenv("UNLEARN_LOG_LEVEL", "INFO").upper()


def num_threads() -> Optional[int]:
    """Thread-count cap for BLAS/OpenMP pools; None leaves the library defaults."""
    raw = os.getenv("UNLEARN_NUM_THREADS")
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"expected a positive integer, got '{raw}'", "UNLEARN_NUM_THREADS")
    if value < 1:
        raise ConfigError(f"expected a positive integer, got '{raw}'", "UNLEARN_NUM_THREADS")
    return value


def show_progress() -> bool:
    return os.getenv("UNLEARN_PROGRESS", "1") not in ("0", "false", "False", "no")


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(level=level or log_level(), format=LOG_FORMAT)


def _nest(flat: Dict[str, Optional[str]]) -> Dict[str, Any]:
    """Turns `dataset__min_count=5` style keys into nested dicts."""
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        if value is None or value == "":
            continue
        parts = key.strip().lower().split("__")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError("key is both a value and a section", ".".join(parts))
            node = child
        node[parts[-1]] = value
    return nested


def parse_experiment_config(data: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key_path = ".".join(str(part) for part in first["loc"])
        raise ConfigError(first["msg"], key_path) from e


def load_experiment_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Reads a flat KEY=VALUE experiment file (dotenv syntax, `#` comments).
    Relative data paths are resolved against the config file's directory.
    """
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"config file '{path}' does not exist")

    data = _nest(dotenv_values(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    dataset = data.get("dataset")
    if isinstance(dataset, dict):
        for key in ("ratings_path", "users_path"):
            if key in dataset and not Path(dataset[key]).is_absolute():
                dataset[key] = str((config_path.parent / dataset[key]).resolve())

    return parse_experiment_config(data)
