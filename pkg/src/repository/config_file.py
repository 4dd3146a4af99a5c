from typing import Dict, Type, TypeVar

import pydantic
from pydantic import BaseModel

from src.exceptions import ConfigError

Model = TypeVar("Model", bound=BaseModel)


def parse_key_values(text: str) -> Dict[str, str]:
    """
    The parse_key_values function reads flat ``key=value`` text.

    Blank lines and lines starting with ``#`` are skipped; list values stay
    comma-separated strings and are split by the schema validators.

    :param text: str: File contents
    :return: Raw values by key
    """
    values: Dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {line_no}: expected key=value, found {raw!r}")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        values[key] = value.strip()
    return {k: v for k, v in values.items() if v != ""}


def build_config(schema: Type[Model], values: Dict[str, object]) -> Model:
    try:
        return schema.parse_obj(values)
    except pydantic.ValidationError as e:
        raise ConfigError(str(e)) from e


def read_config(path: str, schema: Type[Model]) -> Model:
    """
    Loads and validates a config file; unknown keys are rejected by the schema.

    :param path: str: Config file path
    :param schema: Type[BaseModel]: ExperimentConfig or Fig2Config
    :return: The validated configuration
    """
    with open(path, "r", encoding="utf-8") as f:
        return build_config(schema, parse_key_values(f.read()))
