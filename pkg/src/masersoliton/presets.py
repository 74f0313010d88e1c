"""Bundled MBE parameter presets spanning the CW, dense and sparse regimes."""

import copy
import json
from functools import lru_cache
from importlib import resources

from .errors import ConfigError


@lru_cache(maxsize=1)
def _bank():
    text = resources.files("masersoliton").joinpath("data/presets.json").read_text()
    return json.loads(text)


def preset_names():
    return sorted(_bank()["presets"])


def preset(name):
    try:
        return copy.deepcopy(_bank()["presets"][name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {preset_names()}", path="preset")


def preset_config(name):
    return preset(name)["config"]
