"""Run configuration: defaults, config-file merge, flag overrides.

Each subcommand owns a default tree; a JSON config file overrides defaults
and command-line flags override both. Keys that do not exist in the default
tree are rejected, so typos fail loudly before anything runs.
"""

from __future__ import annotations

import copy
import inspect
import json

from .world import arc_world, fork_world, hex_world, straight_world


class ConfigError(ValueError):
    pass


WORLD_BUILDERS = {
    "straight": straight_world,
    "arc": arc_world,
    "hex": hex_world,
    "fork": fork_world,
}

# subtrees whose keys are validated by their consumer, not the schema
FREE_SUBTREES = {"world.params", "start"}

DEFAULTS: dict = {
    "generate": {
        "seed": 0,
        "runs": 4,
        "world": {"kind": "hex", "params": {}},
        "collect": {
            "dt": 0.02, "frame_period_s": 1.5, "nav_speed": 1.5,
            "altitude": 60.0, "max_frames": 200, "route_min_length": 320.0,
            "corner_radius": [2.5, 6.0],
            "pursuit": {"tau_yaw": 2.0, "tau_pos": 1.0},
        },
    },
    "label": {
        "seed": 0,
        "runs_dir": None,
        "augment": [],
        "label": {
            "tracker": "oracle", "tracker_jitter_px": 1.0, "match_count": 100,
            "match_noise_px": 0.5, "match_outlier_frac": 0.1,
            "ransac_threshold_px": 2.0, "ransac_iterations": 1000,
            "reasonable_frac": 0.15, "min_forward_px": 2.0,
        },
    },
    "train": {
        "seed": 0,
        "dataset": None,
        "net": {
            "input_width": 400, "input_height": 100, "pool": 5,
            "stem_channels": 8, "block_channels": 16,
            "dir_hidden": [64, 32], "trans_hidden": [64], "dropout": 0.5,
        },
        "train": {
            "lr": 1e-3, "momentum": 0.9, "batch": 64, "epochs": 20,
            "sigma": 0.1, "lam": 0.5, "dropout_enabled": True,
            "loss_mode": "mean", "val_frac": 0.1,
        },
    },
    "eval": {
        "seed": 0, "dataset": None, "weights": None,
        "mode": "nearest", "self_eval": False,
    },
    "patrol": {
        "seed": 0, "weights": None, "schedule": None,
        "world": {"kind": "fork", "params": {}},
        "start": None,
        "patrol": {
            "dt": 0.02, "control_period_s": 0.1, "altitude": 60.0,
            "max_steps": 600, "lost_threshold_m": 30.0, "s_max": 6.0,
            "texture_seed": None,
        },
    },
    "serve": {
        "seed": 0, "host": "127.0.0.1", "port": 8765,
        "weights": None, "mode": "track", "realtime": True,
        "frame_every": 5, "max_ticks": None,
        "world": {"kind": "hex", "params": {}},
        "nav_speed": 1.5, "altitude": 60.0, "corner_radius": [2.5, 6.0],
        "route_min_length": 320.0, "lost_threshold_m": 30.0,
    },
}

_ENUMS = {
    "eval.mode": ("nearest", "argmax"),
    "serve.mode": ("track", "patrol", "paused"),
    "train.train.loss_mode": ("mean", "sum"),
}


def _merge(base, override, path: str):
    if path in FREE_SUBTREES:
        return copy.deepcopy(override)
    if isinstance(base, dict):
        if not isinstance(override, dict):
            raise ConfigError(f"{path or 'config'}: expected an object")
        out = copy.deepcopy(base)
        for key, value in override.items():
            child = f"{path}.{key}" if path else key
            if key not in base:
                raise ConfigError(f"unknown config key: {child}")
            out[key] = _merge(base[key], value, child)
        return out
    return copy.deepcopy(override)


def _set_path(cfg: dict, dotted: str, value):
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"unknown config key: {dotted}")
        node = node[p]
    if not isinstance(node, dict) or parts[-1] not in node:
        prefix = ".".join(parts[:-1])
        if prefix not in FREE_SUBTREES:
            raise ConfigError(f"unknown config key: {dotted}")
    node[parts[-1]] = value


def _validate(subcommand: str, cfg: dict) -> None:
    kind = cfg.get("world", {}).get("kind")
    if kind is not None and kind not in WORLD_BUILDERS:
        raise ConfigError(f"unknown world kind {kind!r}; "
                          f"choose from {sorted(WORLD_BUILDERS)}")
    for dotted, allowed in _ENUMS.items():
        root, rest = dotted.split(".", 1)
        if root != subcommand:
            continue
        node = cfg
        for p in rest.split("."):
            node = node[p]
        if node not in allowed:
            raise ConfigError(f"{dotted} must be one of {allowed}, got {node!r}")


def load_config(subcommand: str, config_path=None, overrides=()) -> dict:
    """Resolve defaults < file < flags for one subcommand."""
    if subcommand not in DEFAULTS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    cfg = copy.deepcopy(DEFAULTS[subcommand])
    if config_path is not None:
        try:
            with open(config_path) as f:
                data = json.load(f)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {config_path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = _merge(cfg, data, "")
    for dotted, value in overrides:
        _set_path(cfg, dotted, value)
    _validate(subcommand, cfg)
    return cfg


def build_world(spec: dict):
    """Instantiate the configured world, rejecting unknown parameters."""
    kind = spec.get("kind")
    if kind not in WORLD_BUILDERS:
        raise ConfigError(f"unknown world kind {kind!r}")
    builder = WORLD_BUILDERS[kind]
    params = dict(spec.get("params") or {})
    accepted = set(inspect.signature(builder).parameters)
    unknown = set(params) - accepted
    if unknown:
        raise ConfigError(f"world {kind!r} does not accept {sorted(unknown)}")
    if kind == "fork" and "turns" in params:
        params["turns"] = tuple(params["turns"])
    return builder(**params)
