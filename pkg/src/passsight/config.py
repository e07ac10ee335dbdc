"""Flat key-value run configuration.

A config file is a list of ``key = value`` lines without sections. Command
line flags override file values, which override the built-in defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import fields
from pathlib import Path

from .kinematics import AccelModel, ModelKind, VehicleParams
from .psd import SafetyParams

_SECTION = "run"

VEHICLE_KEYS = tuple(f.name for f in fields(VehicleParams))
MODEL_KEYS = ("a_const", "a_max", "v_e", "lam")
SAFETY_KEYS = tuple(f.name for f in fields(SafetyParams))


class ConfigError(ValueError):
    pass


def read_config(path: str | Path | None) -> dict[str, str]:
    """Raw key/value pairs of a flat config file; empty for ``None``."""
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep the case of keys such as L1_s
    try:
        parser.read_string(f"[{_SECTION}]\n" + path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return dict(parser[_SECTION])


def _floats(values: dict[str, str], keys) -> dict[str, float]:
    out = {}
    for k in keys:
        if k in values and values[k] is not None:
            try:
                out[k] = float(values[k])
            except (TypeError, ValueError):
                raise ConfigError(f"{k}: expected a number, got {values[k]!r}") from None
    return out


def merged(file_values: dict[str, str], overrides: dict[str, object]) -> dict[str, object]:
    """File values updated with every override that is not ``None``."""
    out: dict[str, object] = dict(file_values)
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def build_model(kind: ModelKind | str, values: dict) -> AccelModel:
    vehicle = VehicleParams(**_floats(values, VEHICLE_KEYS))
    return AccelModel(kind=ModelKind(kind), params=vehicle, **_floats(values, MODEL_KEYS))


def build_safety(values: dict, user_bounds: bool = False) -> SafetyParams:
    safety = SafetyParams(**_floats(values, SAFETY_KEYS))
    if user_bounds:
        safety.check_user_bounds()
    return safety
