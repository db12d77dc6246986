"""YAML experiment configuration: parsing, schema validation, defaults.

The schema is walked by hand so that error messages carry the full field
path (`topology.n_hosts`) and unknown keys get a did-you-mean suggestion.
Semantic validation (ranges, cross-field rules) stays with the dataclasses'
own validate() methods.
"""

from __future__ import annotations

import difflib
import os
from dataclasses import dataclass, fields
from typing import Any, Optional

import yaml

from .agents import GrayAppSpec
from .errors import ConfigError
from .game import DeceptionParams, GameConfig, RewardParams
from .learn import TrainConfig
from .netmodel import TopologySpec

ENV_CONFIG_PATH = "DECOYNET_CONFIG"


@dataclass(frozen=True)
class ExperimentConfig:
    game: GameConfig = GameConfig()
    train: TrainConfig = TrainConfig()
    out_dir: str = "runs"

    def validate(self) -> "ExperimentConfig":
        self.game.validate()
        self.train.validate()
        if not self.out_dir:
            raise ConfigError("outputs.dir must be a non-empty path")
        return self


_TOP_KEYS = ("seed", "max_steps", "topology", "red", "gray", "rewards", "deception", "train", "outputs")
_TOPOLOGY_KEYS = ("n_hosts", "topology", "gnp_p", "n_crown_jewels", "service_mix")
_RED_KEYS = ("goal", "mode")
_GRAY_KEYS = ("kind", "hosts", "rate")
_REWARD_KEYS = tuple(f.name for f in fields(RewardParams))
_DECEPTION_KEYS = tuple(f.name for f in fields(DeceptionParams))
_TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))
_OUTPUT_KEYS = ("dir",)

# Maps every tunable dataclass field onto its config-file path; a test walks
# this table to prove no knob is unreachable from a config file.
KNOB_PATHS: dict[tuple[str, str], tuple[str, ...]] = {
    **{("TopologySpec", k): ("topology", k) for k in _TOPOLOGY_KEYS},
    **{("RewardParams", k): ("rewards", k) for k in _REWARD_KEYS},
    **{("DeceptionParams", k): ("deception", k) for k in _DECEPTION_KEYS},
    **{("TrainConfig", k): ("train", k) for k in _TRAIN_KEYS},
    ("GameConfig", "topology"): ("topology",),
    ("GameConfig", "red_goal"): ("red", "goal"),
    ("GameConfig", "red_mode"): ("red", "mode"),
    ("GameConfig", "gray_specs"): ("gray",),
    ("GameConfig", "max_steps"): ("max_steps",),
    ("GameConfig", "reward_params"): ("rewards",),
    ("GameConfig", "seed"): ("seed",),
    ("GameConfig", "deception"): ("deception",),
    ("GrayAppSpec", "kind"): ("gray", "kind"),
    ("GrayAppSpec", "hosts"): ("gray", "hosts"),
    ("GrayAppSpec", "rate"): ("gray", "rate"),
    ("ExperimentConfig", "game"): (),
    ("ExperimentConfig", "train"): ("train",),
    ("ExperimentConfig", "out_dir"): ("outputs", "dir"),
}


def _reject_unknown(section: dict, allowed: tuple[str, ...], path: str) -> None:
    for key in section:
        if key not in allowed:
            hint = ""
            close = difflib.get_close_matches(str(key), allowed, n=1)
            if close:
                hint = f" (did you mean {close[0]!r}?)"
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError(f"unknown config key {where!r}{hint}")


def _section(data: dict, key: str) -> dict:
    value = data.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section {key!r} must be a mapping, got {type(value).__name__}")
    return value


def _build_topology(data: dict) -> TopologySpec:
    sec = _section(data, "topology")
    _reject_unknown(sec, _TOPOLOGY_KEYS, "topology")
    kwargs: dict[str, Any] = {k: sec[k] for k in ("n_hosts", "topology", "gnp_p", "n_crown_jewels") if k in sec}
    if "service_mix" in sec:
        mix = sec["service_mix"]
        if not isinstance(mix, dict):
            raise ConfigError("topology.service_mix must be a mapping of service -> rate")
        kwargs["service_mix"] = tuple(sorted((str(k), float(v)) for k, v in mix.items()))
    return TopologySpec(**kwargs)


def _build_gray(data: dict) -> tuple[GrayAppSpec, ...]:
    raw = data.get("gray") or []
    if not isinstance(raw, list):
        raise ConfigError("config section 'gray' must be a list of app specs")
    specs = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ConfigError(f"gray[{i}] must be a mapping")
        _reject_unknown(item, _GRAY_KEYS, f"gray[{i}]")
        missing = [k for k in _GRAY_KEYS if k not in item]
        if missing:
            raise ConfigError(f"gray[{i}] is missing keys: {', '.join(missing)}")
        specs.append(
            GrayAppSpec(kind=item["kind"], hosts=tuple(item["hosts"]), rate=float(item["rate"]))
        )
    return tuple(specs)


def _build_from_keys(cls, sec: dict, allowed: tuple[str, ...], path: str):
    _reject_unknown(sec, allowed, path)
    return cls(**{k: sec[k] for k in allowed if k in sec})


def parse_config(data: Optional[dict]) -> ExperimentConfig:
    """Build a validated ExperimentConfig from already-parsed YAML data."""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    _reject_unknown(data, _TOP_KEYS, "")

    red = _section(data, "red")
    _reject_unknown(red, _RED_KEYS, "red")
    game_kwargs: dict[str, Any] = {
        "topology": _build_topology(data),
        "gray_specs": _build_gray(data),
        "reward_params": _build_from_keys(RewardParams, _section(data, "rewards"), _REWARD_KEYS, "rewards"),
        "deception": _build_from_keys(DeceptionParams, _section(data, "deception"), _DECEPTION_KEYS, "deception"),
    }
    if "goal" in red:
        game_kwargs["red_goal"] = red["goal"]
    if "mode" in red:
        game_kwargs["red_mode"] = red["mode"]
    if "max_steps" in data:
        game_kwargs["max_steps"] = data["max_steps"]
    if "seed" in data:
        game_kwargs["seed"] = data["seed"]

    train_sec = dict(_section(data, "train"))
    if "seed" not in train_sec and "seed" in data:
        train_sec["seed"] = data["seed"]  # one top-level seed drives both by default
    train = _build_from_keys(TrainConfig, train_sec, _TRAIN_KEYS, "train")

    outputs = _section(data, "outputs")
    _reject_unknown(outputs, _OUTPUT_KEYS, "outputs")
    out_dir = outputs.get("dir", "runs")

    return ExperimentConfig(game=GameConfig(**game_kwargs), train=train, out_dir=out_dir).validate()


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a YAML config file.

    Parse errors carry line and column; schema errors carry the field path.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ConfigError(
                f"{path}:{mark.line + 1}:{mark.column + 1}: {getattr(exc, 'problem', exc)}"
            ) from exc
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return parse_config(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def default_config_path() -> Optional[str]:
    return os.environ.get(ENV_CONFIG_PATH)


def resolve_config(path: Optional[str]) -> ExperimentConfig:
    """CLI entry: explicit --config wins, then $DECOYNET_CONFIG, then defaults."""
    chosen = path or default_config_path()
    if chosen:
        return load_config(chosen)
    return ExperimentConfig().validate()
