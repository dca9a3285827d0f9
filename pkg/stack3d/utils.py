"""
Utility functions for flow inputs and outputs.

This module provides helpers for loading configuration and power files,
writing deterministic JSON artifacts and timing flow stages.
"""
import json
import math
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, Union

import yaml
from pydantic import ValidationError

from .config import ConfigurationError, logger
from .params import FlowConfig

PathLike = Union[str, Path]


def load_structured(path: PathLike) -> Any:
    """
    Load a JSON or YAML file.

    Args:
        path: File path; JSON is read through the YAML loader

    Returns:
        Parsed document

    Raises:
        ConfigurationError: If the file is missing or malformed
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigurationError(f"Cannot read {path}: {e}")
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        logger.error(f"Failed to parse {path}: {e}")
        raise ConfigurationError(f"Invalid JSON/YAML in {path}: {e}")


def load_flow_config(path: PathLike) -> FlowConfig:
    """Load and validate a flow configuration; relative input paths resolve against the file."""
    data = load_structured(path)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must contain a mapping")
    base = Path(path).resolve().parent
    for key in ("tech_lef", "cells_lef", "def", "def_file", "power_file"):
        value = data.get(key)
        if isinstance(value, str) and not Path(value).is_absolute():
            data[key] = str(base / value)
    try:
        return FlowConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid flow configuration {path}: {e}")


def load_power_file(path: PathLike) -> Dict[str, float]:
    """Component name to watts; every value must be a finite non-negative number."""
    data = load_structured(path)
    if not isinstance(data, dict):
        raise ConfigurationError(f"power file {path} must map component names to watts")
    power: Dict[str, float] = {}
    for name, value in data.items():
        try:
            watts = float(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"power of '{name}' is not a number: {value!r}")
        if not math.isfinite(watts) or watts < 0:
            raise ConfigurationError(f"power of '{name}' must be finite and non-negative, got {watts}")
        power[str(name)] = watts
    return power


def dumps_json(data: Any) -> str:
    """Stable JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(data: Any, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(data))
    logger.debug(f"Wrote {path}")
    return path


class StageTimer:
    """Wall-clock seconds per named stage, in execution order."""

    def __init__(self):
        self.seconds: Dict[str, float] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - start
            logger.info(f"Stage '{name}' finished in {self.seconds[name]:.3f} s")

    @property
    def total(self) -> float:
        return sum(self.seconds.values())
