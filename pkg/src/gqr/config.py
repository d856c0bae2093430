"""Run configuration: TOML file plus command-line overrides.

The file schema is a closed whitelist; any unknown section or key is a
configuration error, which catches typos like ``bandwith.h`` before any
computation starts.  Command-line flags always win over file values.
"""

import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .errors import ConfigError
from .losses import FAMILIES

# section -> key -> expected type ("number", "int", "bool", "str", "list",
# "numlist"); used for validation only, parsing stays with tomli.
_SCHEMA = {
    "data": {
        "x_columns": "list",
        "y_column": "str",
    },
    "task": {
        "family": "str",
        "tau": "numlist",
        "alpha": "number",
    },
    "grid": {
        "lo": "numlist",
        "hi": "numlist",
        "points": "numlist",
    },
    "bandwidth": {
        "mode": "str",
        "h": "numlist",
        "delta": "number",
        "h1_inflation": "number",
        "tail_inflation": "bool",
    },
    "bootstrap": {
        "n_boot": "int",
        "seed": "int",
        "variant": "str",
        "center": "str",
    },
    "corridor": {
        "method": "str",
    },
    "simulate": {
        "n_trials": "int",
        "master_seed": "int",
        "workers": "int",
        "full_scale": "bool",
        "cells": "list",
    },
    "output": {
        "directory": "str",
        "plot_script": "bool",
    },
}

_CELL_KEYS = {
    "family": "str",
    "tau": "number",
    "n": "int",
    "sigma0": "number",
    "heteroscedastic": "bool",
    "alpha": "number",
    "n_boot": "int",
    "methods": "list",
    "variant": "str",
    "h": "numlist",
    "h1_inflation": "number",
}

VALID_METHODS = ("asymptotic", "bootstrap")


def _type_ok(value, kind) -> bool:
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "str":
        return isinstance(value, str)
    if kind == "list":
        return isinstance(value, list)
    if kind == "numlist":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return True
        return isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        )
    return False


def load_config_file(path) -> dict:
    """Parse and validate a TOML configuration file."""
    try:
        with open(path, "rb") as handle:
            raw = _toml.load(handle)
    except OSError as exc:
        raise ConfigError("cannot open config %s: %s" % (path, exc)) from exc
    except _toml.TOMLDecodeError as exc:
        raise ConfigError("config %s is not valid TOML: %s" % (path, exc)) from exc

    for section, body in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(
                "unknown config section [%s] (known: %s)"
                % (section, ", ".join(sorted(_SCHEMA)))
            )
        if not isinstance(body, dict):
            raise ConfigError("config section [%s] must be a table" % section)
        for key, value in body.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    "unknown key %s.%s (known keys: %s)"
                    % (section, key, ", ".join(sorted(_SCHEMA[section])))
                )
            if not _type_ok(value, _SCHEMA[section][key]):
                raise ConfigError(
                    "config value %s.%s has the wrong type (expected %s)"
                    % (section, key, _SCHEMA[section][key])
                )
    for cell in raw.get("simulate", {}).get("cells", []):
        if not isinstance(cell, dict):
            raise ConfigError("simulate.cells entries must be tables")
        for key, value in cell.items():
            if key not in _CELL_KEYS:
                raise ConfigError(
                    "unknown cell key %r (known: %s)" % (key, ", ".join(sorted(_CELL_KEYS)))
                )
            if not _type_ok(value, _CELL_KEYS[key]):
                raise ConfigError(
                    "cell key %r has the wrong type (expected %s)" % (key, _CELL_KEYS[key])
                )
    return raw


@dataclass
class RunConfig:
    """Everything a command needs, after file/flag merging and validation."""

    family: str = "quantile"
    taus: tuple = (0.5,)
    alpha: float = 0.05
    method: str = "bootstrap"

    x_columns: tuple = ()
    y_column: str = "y"

    grid_lo: tuple = None
    grid_hi: tuple = None
    grid_points: tuple = None

    bandwidth_mode: str = "auto"
    h: tuple = None
    delta: float = 0.05
    h1_inflation: float = 1.0
    # None means "not set": the compare command turns it on for quantile
    # corridors, every other command leaves it off
    tail_inflation: bool = None

    n_boot: int = 1000
    seed: int = 0
    variant: str = "auto"
    center: str = "analytic"

    workers: int = None
    out_dir: str = "."
    plot_script: bool = False

    n_trials: int = 200
    master_seed: int = 0
    full_scale: bool = False
    cells: list = field(default_factory=list)

    def validate(self):
        if self.family not in FAMILIES:
            raise ConfigError("family must be one of %s, got %r" % (", ".join(FAMILIES), self.family))
        for tau in self.taus:
            if not 0.0 < tau < 1.0:
                raise ConfigError("tau must lie in (0, 1), got %r" % (tau,))
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1), got %r" % (self.alpha,))
        if self.method not in VALID_METHODS:
            raise ConfigError(
                "method must be one of %s, got %r" % (", ".join(VALID_METHODS), self.method)
            )
        if self.bandwidth_mode not in ("auto", "manual"):
            raise ConfigError("bandwidth.mode must be auto or manual, got %r" % self.bandwidth_mode)
        if self.bandwidth_mode == "manual" and self.h is None:
            raise ConfigError("bandwidth.mode = manual requires bandwidth.h")
        if self.h is not None and any(v <= 0.0 for v in self.h):
            raise ConfigError("bandwidths must be positive, got %r" % (self.h,))
        if self.n_boot < 100:
            raise ConfigError("bootstrap.n_boot must be at least 100, got %d" % self.n_boot)
        if self.n_trials < 1:
            raise ConfigError("simulate.n_trials must be positive, got %d" % self.n_trials)
        return self


def _as_tuple(value):
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return (float(value),)
    return tuple(float(v) for v in value)


def build_run_config(file_config: dict, overrides: dict) -> RunConfig:
    """Merge a validated file dict and a flag-override dict into RunConfig.

    ``overrides`` uses flat keys matching RunConfig fields; None values
    mean the flag was not given.
    """
    cfg = RunConfig()
    data = file_config.get("data", {})
    task = file_config.get("task", {})
    grid = file_config.get("grid", {})
    bandwidth = file_config.get("bandwidth", {})
    bootstrap = file_config.get("bootstrap", {})
    corridor = file_config.get("corridor", {})
    simulate = file_config.get("simulate", {})
    output = file_config.get("output", {})

    if "x_columns" in data:
        cfg.x_columns = tuple(str(c) for c in data["x_columns"])
    if "y_column" in data:
        cfg.y_column = str(data["y_column"])
    if "family" in task:
        cfg.family = task["family"]
    if "tau" in task:
        taus = task["tau"]
        cfg.taus = tuple(taus) if isinstance(taus, list) else (float(taus),)
    if "alpha" in task:
        cfg.alpha = float(task["alpha"])
    if "lo" in grid:
        cfg.grid_lo = _as_tuple(grid["lo"])
    if "hi" in grid:
        cfg.grid_hi = _as_tuple(grid["hi"])
    if "points" in grid:
        cfg.grid_points = tuple(int(p) for p in _as_tuple(grid["points"]))
    if "mode" in bandwidth:
        cfg.bandwidth_mode = bandwidth["mode"]
    if "h" in bandwidth:
        cfg.h = _as_tuple(bandwidth["h"])
    if "delta" in bandwidth:
        cfg.delta = float(bandwidth["delta"])
    if "h1_inflation" in bandwidth:
        cfg.h1_inflation = float(bandwidth["h1_inflation"])
    if "tail_inflation" in bandwidth:
        cfg.tail_inflation = bool(bandwidth["tail_inflation"])
    if "n_boot" in bootstrap:
        cfg.n_boot = int(bootstrap["n_boot"])
    if "seed" in bootstrap:
        cfg.seed = int(bootstrap["seed"])
    if "variant" in bootstrap:
        cfg.variant = bootstrap["variant"]
    if "center" in bootstrap:
        cfg.center = bootstrap["center"]
    if "method" in corridor:
        cfg.method = corridor["method"]
    if "n_trials" in simulate:
        cfg.n_trials = int(simulate["n_trials"])
    if "master_seed" in simulate:
        cfg.master_seed = int(simulate["master_seed"])
    if "workers" in simulate:
        cfg.workers = int(simulate["workers"])
    if "full_scale" in simulate:
        cfg.full_scale = bool(simulate["full_scale"])
    if "cells" in simulate:
        cfg.cells = list(simulate["cells"])
    if "directory" in output:
        cfg.out_dir = output["directory"]
    if "plot_script" in output:
        cfg.plot_script = bool(output["plot_script"])

    for name, value in overrides.items():
        if value is None:
            continue
        if not hasattr(cfg, name):
            raise ConfigError("internal: unknown override %r" % name)
        setattr(cfg, name, value)
    if overrides.get("h") is not None:
        cfg.bandwidth_mode = "manual"
    return cfg.validate()
