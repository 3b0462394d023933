"""Run configuration: JSON schema with defaults, strict key checking.

A config file holds up to five sections (data, graph, model, train, eval).
Every key has a documented default below; unknown keys are rejected with the
full key path so typos never silently fall back to a default.
"""

import json
from pathlib import Path

from regraph.data import SyntheticConfig
from regraph.errors import ConfigError
from regraph.models import ModelSpec
from regraph.models.architectures import ARCHITECTURES, CONNECTIVITY_OF
from regraph.training import TrainConfig

__all__ = [
    "default_config",
    "load_config",
    "model_spec_from",
    "resolve_config",
    "synth_config_from",
    "train_config_from",
]

_MISSING = object()


def _leaf(default, types):
    return (default, types)


# (default, accepted types); None defaults carry their concrete type
_SCHEMA = {
    "data": {
        "grid_step_min": _leaf(10, int),
        "max_gap_steps": _leaf(6, int),
        "k": _leaf(6, int),
        "horizons": _leaf([1, 3, 12, 36], list),
        "train_weeks": _leaf([], list),
        "test_weeks": _leaf([], list),
        "generality_weeks": _leaf([], list),
        "synth": {
            "n_sites": _leaf(105, int),
            "n_regions": _leaf(8, int),
            "days": _leaf(14, int),
            "seed": _leaf(0, int),
            "start_date": _leaf("2024-01-01", str),
            "grid_step_min": _leaf(10, int),
            "base_range": _leaf([0.4, 0.65], list),
            "amplitude_range": _leaf([0.25, 0.45], list),
            "phase_range": _leaf([-4.0, 4.0], list),
            "weekend_range": _leaf([-0.25, -0.05], list),
            "noise_level": _leaf(0.02, (int, float)),
            "coupling": _leaf(0.5, (int, float)),
            "capacity_range": _leaf([20, 120], list),
            "drop_rate": _leaf(0.0, (int, float)),
            "forced_full": _leaf([], list),
            "forced_level": _leaf(1.25, (int, float)),
        },
    },
    "graph": {
        "threshold_miles": _leaf(40.0, (int, float)),
        "adjacency_weights": _leaf("gaussian", str),
        "sigma_miles": _leaf(20.0, (int, float)),
        "strategy": _leaf("connected", str),
        "regions": _leaf(None, (int, type(None))),
        "seed": _leaf(0, int),
    },
    "model": {
        "architecture": _leaf("RegTGCN", str),
        # None resolves by architecture: 512 for TGCN, 256 for the rest
        "hidden": _leaf(None, (int, type(None))),
        "seed": _leaf(0, int),
    },
    "train": {
        "epochs": _leaf(100, int),
        "learning_rate": _leaf(1e-3, (int, float)),
        "weight_decay": _leaf(1e-4, (int, float)),
        "seed": _leaf(0, int),
        "shuffle": _leaf(True, bool),
        "patience": _leaf(20, int),
        "checkpoint_every": _leaf(0, int),
        "grad_clip_norm": _leaf(5.0, (int, float, type(None))),
        "val_fraction": _leaf(0.1, (int, float)),
        "rmsprop_decay": _leaf(0.99, (int, float)),
        "rmsprop_smoothing": _leaf(1e-8, (int, float)),
    },
    "eval": {
        "literal_eq14": _leaf(False, bool),
    },
}


def _resolve_section(schema: dict, given, path: str) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"config section '{path}' must be an object")
    for key in given:
        if key not in schema:
            raise ConfigError(f"unknown config key: {path}.{key}"
                              if path else f"unknown config key: {key}")
    out = {}
    for key, node in schema.items():
        child_path = f"{path}.{key}" if path else key
        value = given.get(key, _MISSING)
        if isinstance(node, dict):
            out[key] = _resolve_section(node, {} if value is _MISSING else value,
                                        child_path)
            continue
        default, types = node
        if value is _MISSING:
            out[key] = default
            continue
        if isinstance(value, bool) and bool not in _as_tuple(types):
            raise ConfigError(f"config key {child_path} has the wrong type: "
                              f"expected {_type_names(types)}, got bool")
        if not isinstance(value, types):
            raise ConfigError(f"config key {child_path} has the wrong type: "
                              f"expected {_type_names(types)}, "
                              f"got {type(value).__name__}")
        out[key] = value
    return out


def _as_tuple(types):
    return types if isinstance(types, tuple) else (types,)


def _type_names(types) -> str:
    names = [("null" if t is type(None) else t.__name__)
             for t in _as_tuple(types)]
    return " or ".join(names)


def default_config() -> dict:
    return _resolve_section(_SCHEMA, {}, "")


def resolve_config(given: dict) -> dict:
    """Merge a user config over the defaults, rejecting unknown keys."""
    if not isinstance(given, dict):
        raise ConfigError("config root must be a JSON object")
    return _resolve_section(_SCHEMA, given, "")


def load_config(path) -> dict:
    """Read and resolve a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from exc
    return resolve_config(raw)


def synth_config_from(resolved: dict) -> SyntheticConfig:
    s = resolved["data"]["synth"]
    return SyntheticConfig(
        n_sites=s["n_sites"], n_regions=s["n_regions"], days=s["days"],
        seed=s["seed"], start_date=s["start_date"],
        grid_step_min=s["grid_step_min"],
        base_range=tuple(s["base_range"]),
        amplitude_range=tuple(s["amplitude_range"]),
        phase_range=tuple(s["phase_range"]),
        weekend_range=tuple(s["weekend_range"]),
        noise_level=float(s["noise_level"]), coupling=float(s["coupling"]),
        capacity_range=tuple(s["capacity_range"]),
        drop_rate=float(s["drop_rate"]),
        forced_full=tuple(s["forced_full"]),
        forced_level=float(s["forced_level"]))


def resolve_hidden(architecture: str, hidden) -> int:
    if hidden is not None:
        return hidden
    return 512 if architecture == "TGCN" else 256


def model_spec_from(resolved: dict, region_count=None) -> ModelSpec:
    m = resolved["model"]
    architecture = m["architecture"]
    if architecture not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture '{architecture}' "
                          f"(choose from {', '.join(ARCHITECTURES)})")
    connectivity = CONNECTIVITY_OF[architecture]
    return ModelSpec(
        architecture=architecture,
        hidden=resolve_hidden(architecture, m["hidden"]),
        k=resolved["data"]["k"],
        horizons=tuple(resolved["data"]["horizons"]),
        connectivity=connectivity,
        region_count=region_count if connectivity == "random" else None,
        seed=m["seed"])


def train_config_from(resolved: dict) -> TrainConfig:
    t = resolved["train"]
    clip = t["grad_clip_norm"]
    return TrainConfig(
        epochs=t["epochs"],
        horizons=tuple(resolved["data"]["horizons"]),
        learning_rate=float(t["learning_rate"]),
        weight_decay=float(t["weight_decay"]),
        seed=t["seed"], shuffle=t["shuffle"], patience=t["patience"],
        checkpoint_every=t["checkpoint_every"],
        grad_clip_norm=None if clip is None else float(clip),
        val_fraction=float(t["val_fraction"]),
        rmsprop_decay=float(t["rmsprop_decay"]),
        rmsprop_smoothing=float(t["rmsprop_smoothing"]))
