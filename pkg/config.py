"""
Experiment configuration files.

A config file is flat key=value text. Keys are grouped either by dotted
prefixes (problem.gamma=1) or by [section] headers; both forms may be mixed.
Lists are comma separated. The process environment is never consulted.
"""
import io
import re
from pathlib import Path
from typing import Dict, Iterable, Optional, Union

from dotenv import dotenv_values
from pydantic import ValidationError

from errors import ConfigError
from models import ExperimentConfig

SECTION_RE = re.compile(r"^\s*\[([A-Za-z_][\w-]*)\]\s*$")


def read_flat(path: Union[str, Path]) -> Dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    lines = []
    section = None
    for raw in text.splitlines():
        match = SECTION_RE.match(raw)
        if match:
            section = match.group(1)
            continue
        stripped = raw.strip()
        key = stripped.partition("=")[0]
        # dotted keys are absolute even inside a section
        if section and stripped and not stripped.startswith("#") and "=" in stripped and "." not in key:
            lines.append(f"{section}.{stripped}")
        else:
            lines.append(raw)
    values = dotenv_values(stream=io.StringIO("\n".join(lines) + "\n"), interpolate=False)
    return {key: value for key, value in values.items() if value is not None}


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        out[key.strip()] = value.strip()
    return out


def parse_flat(flat: Dict[str, str]) -> ExperimentConfig:
    nested: Dict[str, Dict[str, str]] = {}
    for key, value in flat.items():
        section, _, name = key.partition(".")
        if not name or section not in ExperimentConfig.model_fields:
            raise ConfigError(f"unknown config key {key!r}; expected <section>.<name>")
        if value == "" and name != "eps":
            continue
        nested.setdefault(section, {})[name] = value
    try:
        return ExperimentConfig.model_validate(nested)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def load_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = (),
                base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """base (a canned scenario), then the file, then --set overrides."""
    flat = base.to_flat() if base is not None else {}
    if path is not None:
        flat.update(read_flat(path))
    flat.update(parse_overrides(overrides))
    return parse_flat(flat)


def dump_config(config: ExperimentConfig) -> str:
    """Flat text that load_config reads back to an equal config."""
    return "".join(f"{key}={value}\n" for key, value in sorted(config.to_flat().items()))
