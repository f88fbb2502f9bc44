"""Flat TOML run configuration.

Keys are the fields of :class:`GeometryConfig` and :class:`TrackerConfig`
side by side, for example::

    row_count = 65536
    llc_sets = 64
    variant = "start-d"
    t_rh = 256

Unknown keys are rejected so that typos do not silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .geometry import GeometryConfig, TrackerConfig

GEOMETRY_KEYS = tuple(f.name for f in fields(GeometryConfig))
TRACKER_KEYS = tuple(f.name for f in fields(TrackerConfig))


def split_config(data: dict) -> tuple[GeometryConfig, TrackerConfig]:
    unknown = set(data) - set(GEOMETRY_KEYS) - set(TRACKER_KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    geo = GeometryConfig(**{k: data[k] for k in GEOMETRY_KEYS if k in data})
    try:
        trk = TrackerConfig(**{k: data[k] for k in TRACKER_KEYS if k in data})
    except ValueError as exc:
        raise ConfigError(f"bad tracker setting: {exc}") from None
    return geo, trk


def load_config(path: Optional[str]) -> tuple[GeometryConfig, TrackerConfig]:
    """Read a config file; ``None`` gives the desk defaults."""
    if path is None:
        return GeometryConfig(), TrackerConfig()
    p = Path(path)
    with p.open("rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from None
    return split_config(data)


def dump_config(geometry: GeometryConfig, tracker: TrackerConfig) -> str:
    lines = []
    for obj, keys in ((geometry, GEOMETRY_KEYS), (tracker, TRACKER_KEYS)):
        for k in keys:
            v = getattr(obj, k)
            if v is None:
                continue
            if hasattr(v, "value"):
                v = v.value
            if isinstance(v, bool):
                lines.append(f"{k} = {'true' if v else 'false'}")
            elif isinstance(v, str):
                lines.append(f'{k} = "{v}"')
            else:
                lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
