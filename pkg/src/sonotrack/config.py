"""Tracker configuration and dotted-key overrides (``otcm.k=7``)."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError


@dataclass(frozen=True)
class EnhanceConfig:
    enabled: bool = True
    sigma: float = 2.0
    ksize: int = 0  # 0 -> 2*ceil(3*sigma)+1
    gain: float = 2.0


@dataclass(frozen=True)
class OtcmConfig:
    enabled: bool = True
    k: int = 5
    iob_thresh: float = 0.6
    warmup: int = 10
    pos_std: float = 1.0 / 20
    vel_std: float = 1.0 / 160
    meas_std: float = 1.0 / 20


@dataclass(frozen=True)
class UpdateConfig:
    interval: int = 50
    min_score: float = 0.5


@dataclass(frozen=True)
class TrackerConfig:
    template_size: int = 128
    search_size: int = 256
    template_context: float = 2.0
    search_context: float = 4.0
    stride: int = 16
    embed_dim: int = 32
    ncc_downscale: int = 4
    scales: tuple[float, ...] = (0.95, 1.0, 1.05)
    scale_penalty: float = 0.97
    window: bool = True
    fem: bool = True
    mtfm: bool = True
    seed: int = 0
    enhance: EnhanceConfig = field(default_factory=EnhanceConfig)
    otcm: OtcmConfig = field(default_factory=OtcmConfig)
    update: UpdateConfig = field(default_factory=UpdateConfig)

    def __post_init__(self):
        validate(self)

    @property
    def template_grid(self) -> int:
        return self.template_size // self.stride

    @property
    def search_grid(self) -> int:
        return self.search_size // self.stride


def validate(cfg: TrackerConfig) -> None:
    for name in ("template_size", "search_size"):
        if getattr(cfg, name) % cfg.stride:
            raise ConfigError(f"{name}={getattr(cfg, name)} is not divisible by stride={cfg.stride}")
    if 1.0 not in cfg.scales:
        raise ConfigError(f"scales must contain 1.0, got {cfg.scales}")
    if any(s <= 0 for s in cfg.scales):
        raise ConfigError(f"scales must be positive, got {cfg.scales}")
    ds = cfg.ncc_downscale
    if ds < 1 or (cfg.stride // 2) % ds or cfg.template_size % (ds * cfg.template_grid):
        raise ConfigError(f"ncc_downscale={ds} must divide stride/2 and the template patch size")
    if (cfg.template_size // ds) % 2:
        raise ConfigError("downscaled template size must be even")
    if cfg.template_context <= 0 or cfg.search_context <= 0:
        raise ConfigError("context factors must be positive")
    if cfg.embed_dim < 1:
        raise ConfigError(f"embed_dim must be >= 1, got {cfg.embed_dim}")
    if cfg.otcm.k < 1:
        raise ConfigError(f"otcm.k must be >= 1, got {cfg.otcm.k}")
    if cfg.update.interval < 1:
        raise ConfigError(f"update.interval must be >= 1, got {cfg.update.interval}")
    if cfg.enhance.ksize and (cfg.enhance.ksize < 3 or cfg.enhance.ksize % 2 == 0):
        raise ConfigError(f"enhance.ksize must be 0 or an odd integer >= 3, got {cfg.enhance.ksize}")
    if cfg.enhance.sigma <= 0 or cfg.enhance.gain < 0:
        raise ConfigError("enhance.sigma must be > 0 and enhance.gain >= 0")


# ---------------------------------------------------------------------------
# generic dataclass <-> dict / override helpers (also used by SynthSpec)

def to_dict(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            v = to_dict(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def from_dict(cls, data: dict):
    hints = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in hints:
            raise ConfigError(f"unknown {cls.__name__} field {key!r}")
        default = _default_of(hints[key])
        if dataclasses.is_dataclass(default):
            kwargs[key] = from_dict(type(default), value)
        elif value is not None and default is not None:
            kwargs[key] = _coerce(key, value, default)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def _default_of(f: dataclasses.Field):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    return None


def override_keys(obj, prefix: str = "") -> list[str]:
    keys = []
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            keys.extend(override_keys(v, f"{prefix}{f.name}."))
        else:
            keys.append(prefix + f.name)
    return keys


def _coerce(key: str, raw: Any, like: Any):
    try:
        if isinstance(like, bool):
            if isinstance(raw, bool):
                return raw
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        if isinstance(like, tuple):
            items = raw.split(",") if isinstance(raw, str) else raw
            return tuple(float(x) for x in items)
        if isinstance(like, str):
            return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse {key}={raw!r} as {type(like).__name__}") from None
    return raw


def apply_overrides(obj, overrides: list[str] | dict):
    """Return a copy of a (nested) dataclass with dotted ``key=value`` overrides applied."""
    if isinstance(overrides, dict):
        items = list(overrides.items())
    else:
        items = []
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            k, v = item.split("=", 1)
            items.append((k.strip(), v.strip()))
    valid = override_keys(obj)
    for key, value in items:
        if key not in valid:
            raise ConfigError(f"unknown override key {key!r}; valid keys: {', '.join(valid)}")
        obj = _set_path(obj, key.split("."), value, key)
    return obj


def _set_path(obj, parts: list[str], value, full_key: str):
    head = parts[0]
    current = getattr(obj, head)
    if len(parts) == 1:
        return dataclasses.replace(obj, **{head: _coerce(full_key, value, current)})
    return dataclasses.replace(obj, **{head: _set_path(current, parts[1:], value, full_key)})
