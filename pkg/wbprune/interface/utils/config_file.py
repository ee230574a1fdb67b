"""
Flat key=value config files with command-line overrides
"""

import logging
import os
from typing import Dict, List, Optional, Sequence

from pydantic import ValidationError

from wbprune.classes.run import TrainConfig
from wbprune.errors import ConfigError

logger = logging.getLogger(__name__)

LIST_KEYS = {"conv_channels", "milestones"}
NONE_VALUES = {"", "none", "null"}


def known_keys() -> Dict[str, str]:
    """Accepted spelling -> field name"""
    keys = {}
    for name, field in TrainConfig.model_fields.items():
        keys[name] = name
        if field.alias:
            keys[field.alias] = name
    return keys


def _convert(key: str, value: str):
    value = value.strip()
    if value.lower() in NONE_VALUES:
        return [] if key in LIST_KEYS and value == "" else None
    if key in LIST_KEYS:
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, object]:
    """``key = value`` per line; ``#`` starts a comment; list values are comma separated"""
    keys = known_keys()
    values: Dict[str, object] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected key=value, got '{line}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in keys:
            raise ConfigError(f"{source}:{line_no}: unknown key '{key}'")
        values[keys[key]] = _convert(keys[key], value)
    return values


def parse_overrides(overrides: Sequence[str]) -> Dict[str, object]:
    keys = known_keys()
    values: Dict[str, object] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got '{item}'")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in keys:
            raise ConfigError(f"--set: unknown key '{key}'")
        values[keys[key]] = _convert(keys[key], value)
    return values


def build_config(values: Dict[str, object], base: Optional[TrainConfig] = None) -> TrainConfig:
    """Validate raw values on top of ``base`` (or the defaults)"""
    merged = base.model_dump() if base is not None else {}
    if "finetune_epochs" in values:
        # derived schedule follows the new epoch count
        for key in ("milestones", "mask_epochs"):
            if key not in values:
                merged.pop(key, None)
    merged.update(values)
    try:
        return TrainConfig(**merged)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
                             for err in e.errors())
        raise ConfigError(f"invalid config: {problems}")


def load_config(path: Optional[str] = None, overrides: Sequence[str] = (), seed: Optional[int] = None,
                base: Optional[TrainConfig] = None) -> TrainConfig:
    """Config file, then ``--set`` overrides, then ``--seed``"""
    values: Dict[str, object] = {}
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            values.update(parse_config_text(f.read(), source=path))
    values.update(parse_overrides(overrides))
    if seed is not None:
        values["seed"] = seed
    config = build_config(values, base)
    logger.debug("config: %s", config.model_dump())
    return config


def config_lines(config: TrainConfig) -> List[str]:
    """Config rendered back to key=value lines"""
    lines = []
    for key, value in config.model_dump(by_alias=True).items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {'none' if value is None else value}")
    return lines
