"""Pinned constants and verdict brackets.

The underlying theory only asserts existence of suitable constants, so every
constant is a config knob with a default pinned here after pilot runs.  The
checked-in ``calibration.json`` is the single source of truth; experiment
configs may override any entry per run.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=1)
def load() -> dict:
    with resources.files("gplab").joinpath("calibration.json").open("r", encoding="utf-8") as fh:
        return json.load(fh)


def constants_for(kind: str) -> dict:
    """Defaults merged with the per-experiment refinements."""
    data = load()
    merged = dict(data["defaults"])
    merged.update(data["experiments"].get(kind, {}))
    return merged


def bracket(name: str, key: str | None = None) -> list:
    data = load()["brackets"][name]
    if key is not None:
        data = data[str(key)]
    return data


def threshold(name: str):
    return load()["thresholds"][name]
