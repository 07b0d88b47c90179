"""Flat TOML experiment configs.

Every key sits at the top level of the file and maps to one field of
:class:`TrainConfig` or one of its sub-configs. PPO keys carry a ``ppo_``
prefix; camera keys a ``camera_`` prefix. Unknown keys are rejected.

Example::

    task = "reach"
    iterations = 200
    algorithm = "hgail"
    strategy = "future"
    p_ht = 1.0
    ppo_epochs_per_batch = 2
"""

from __future__ import annotations

import dataclasses
import hashlib
import sys
from pathlib import Path

from .env import EnvConfig
from .geometry import CameraModel
from .hindsight import HindsightConfig
from .optim import PpoConfig
from .trainer import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_NESTED = {"env": EnvConfig, "hindsight": HindsightConfig, "ppo": PpoConfig}
_PREFIX = {"env": "", "hindsight": "", "ppo": "ppo_"}
CAMERA_KEYS = ("camera_intrinsics", "camera_rotation", "camera_translation")


class ConfigError(ValueError):
    """A config file that cannot be turned into a TrainConfig."""


def _schema() -> dict[str, tuple[str | None, dataclasses.Field]]:
    keys = {}
    for f in dataclasses.fields(TrainConfig):
        if f.name in _NESTED:
            continue
        keys[f.name] = (None, f)
    for section, cls in _NESTED.items():
        for f in dataclasses.fields(cls):
            keys[_PREFIX[section] + f.name] = (section, f)
    return keys


SCHEMA = _schema()


def _coerce(key: str, value, default):
    """Check a TOML value against the type of the field's default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
            raise ConfigError(f"{key}: expected a list of numbers, got {value!r}")
        return tuple(float(v) for v in value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    return value


def config_from_mapping(values: dict, base: TrainConfig | None = None) -> TrainConfig:
    """Apply flat ``values`` on top of ``base`` (defaults when omitted)."""
    base = base or TrainConfig()
    values = {k: v for k, v in values.items() if k not in CAMERA_KEYS}
    top, nested = {}, {name: {} for name in _NESTED}
    task = values.get("task", base.env.task)
    env_base = base.env if task == base.env.task else EnvConfig.default(task)
    for key, value in values.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        section, f = SCHEMA[key]
        if section is None:
            top[f.name] = _coerce(key, value, getattr(base, f.name))
        else:
            current = env_base if section == "env" else getattr(base, section)
            nested[section][f.name] = _coerce(key, value, getattr(current, f.name))
    try:
        env = dataclasses.replace(env_base, **nested["env"])
        hindsight = dataclasses.replace(base.hindsight, **nested["hindsight"])
        ppo = dataclasses.replace(base.ppo, **nested["ppo"])
        return dataclasses.replace(base, env=env, hindsight=hindsight, ppo=ppo, **top)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def config_to_mapping(config: TrainConfig) -> dict:
    out = {}
    for key, (section, f) in SCHEMA.items():
        owner = config if section is None else getattr(config, section)
        value = getattr(owner, f.name)
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


def dumps(config: TrainConfig) -> str:
    """Serialize every key, one per line, in schema order."""
    lines = []
    for key, value in config_to_mapping(config).items():
        lines.append(f"{key} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return str(value)


def parse(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"malformed config: {err}") from err


def load(path, base: TrainConfig | None = None) -> TrainConfig:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror or err}") from err
    try:
        return config_from_mapping(parse(text), base)
    except ConfigError as err:
        raise ConfigError(f"{path}: {err}") from err


def load_camera(path) -> CameraModel:
    values = parse(Path(path).read_text())
    missing = [k for k in CAMERA_KEYS if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing camera keys {missing}")
    return CameraModel.from_config({k[len("camera_"):]: values[k] for k in CAMERA_KEYS})


def blob_hash(data: bytes) -> str:
    """Git's object id for a blob with this content."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
