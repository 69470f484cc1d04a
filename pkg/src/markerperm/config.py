"""Key-value config files overriding the default dataclass configs.

One ``section.key = value`` per line, ``#`` starts a comment::

    network.hidden_width = 256
    train.lr_initial = 1e-3
    sinkhorn.iterations = 5
    scoring.p = 2
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .core import DataError
from .permnet import NetworkConfig, TrainConfig
from .sinkhorn import SinkhornConfig
from .trajlabel import ScoringConfig

SECTIONS = {
    "network": NetworkConfig,
    "train": TrainConfig,
    "sinkhorn": SinkhornConfig,
    "scoring": ScoringConfig,
}

_CASTS = {"int": int, "float": float, "str": str, "bool": lambda v: v.lower() in ("1", "true", "yes")}


def parse_config_text(text: str) -> dict:
    """``{section: {field: value}}`` with values cast to the field types."""
    out = {name: {} for name in SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        cls = SECTIONS.get(section)
        if cls is None or not name:
            raise DataError(f"config line {lineno}: unknown key {key!r}")
        fields = {f.name: f for f in dataclasses.fields(cls)}
        if name not in fields:
            raise DataError(f"config line {lineno}: unknown key {key!r}")
        cast = _CASTS.get(str(fields[name].type), str)
        try:
            out[section][name] = cast(value)
        except ValueError as exc:
            raise DataError(f"config line {lineno}: bad value for {key}: {value!r}") from exc
    return out


def load_config(path=None) -> dict:
    if path is None:
        return {name: {} for name in SECTIONS}
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def build(section: str, overrides: dict, **defaults):
    """Instantiate the section's dataclass from defaults plus file overrides."""
    kwargs = dict(defaults)
    kwargs.update(overrides.get(section, {}))
    try:
        return SECTIONS[section](**kwargs)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid {section} config: {exc}") from exc
