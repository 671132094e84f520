"""One configuration tree for the whole toolkit.

Everything tunable lives in a GlobalConfig: estimation parameters (GPS
quality gates, slot duration, training buffer, orientation filter, motion
thresholds, detector thresholds, landmark matching) plus default noise
parameters for the simulator. A run is reproducible from one JSON file;
individual keys can be overridden with dotted paths like
``estimator.matching.alpha=0.7`` or ``noise.seed=3``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any, Optional, get_type_hints

from .landmarks import DetectorConfig
from .motion import MotionThresholds
from .simulator import NoiseSpec


@dataclass(frozen=True)
class MotionConfig:
    """Motion-window geometry plus the classification thresholds."""

    accel_var: float = 0.1
    gyro_var: float = 0.005
    window_s: float = 1.0
    hop_s: float = 0.5

    def __post_init__(self):
        if self.window_s < 0.5 or self.hop_s <= 0.0:
            raise ValueError("motion windows need window_s >= 0.5 and hop_s > 0")

    def thresholds(self) -> MotionThresholds:
        return MotionThresholds(accel_var=self.accel_var, gyro_var=self.gyro_var)


@dataclass(frozen=True)
class MatchingConfig:
    """Landmark matching: score weight, distance scale, search radius."""

    alpha: float = 0.5
    d0_m: float = 100.0
    radius_m: float = 300.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.d0_m <= 0.0 or self.radius_m <= 0.0:
            raise ValueError("d0_m and radius_m must be > 0")


@dataclass(frozen=True)
class EstimatorConfig:
    slot_s: float = 2.0                  # timeslot duration
    gps_good_m: float = 30.0             # accuracy gate for usable fixes
    gps_train_m: float = 20.0            # stricter gate for training fixes
    buffer_capacity: int = 150           # sliding training window, slots
    min_obs: int = 10                    # observations before the first fit
    mag_blend_k: float = 0.02            # magnetometer blend per sample
    gravity_tau_s: float = 1.0           # gravity low-pass time constant
    gravity_freeze_mps2: float = 0.5     # freeze gravity updates above this deviation
    declination_deg: float = 0.0
    heading_smooth_s: float = 0.5        # heading moving-average span
    reanchor_heading: bool = True        # re-anchor heading from GPS course
    reanchor_min_speed: float = 3.0      # m/s; GPS bearings are junk when slow
    reanchor_alpha: float = 0.1          # blend rate for the heading offset
    cruise_hold_accel: float = 0.15      # m/s2; below this a slot holds speed (0 disables)
    queue_bucket: str = "default"        # time-of-day bucket for queue correction
    queue_profile_path: Optional[str] = None
    motion: MotionConfig = field(default_factory=MotionConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    matching: MatchingConfig = field(default_factory=MatchingConfig)

    def __post_init__(self):
        if self.gps_train_m > self.gps_good_m:
            raise ValueError(
                f"gps_train_m ({self.gps_train_m}) must be <= gps_good_m ({self.gps_good_m})"
            )
        for name in ("slot_s", "gps_good_m", "gps_train_m", "buffer_capacity", "min_obs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 <= self.mag_blend_k <= 1.0:
            raise ValueError("mag_blend_k must be in [0, 1]")
        if not 0.0 < self.reanchor_alpha <= 1.0:
            raise ValueError("reanchor_alpha must be in (0, 1]")


@dataclass(frozen=True)
class GlobalConfig:
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    noise: NoiseSpec = field(default_factory=NoiseSpec)


def default_config() -> GlobalConfig:
    return GlobalConfig()


def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(data: dict, cls=GlobalConfig):
    """Build a config dataclass from a (possibly partial) nested dict."""
    hints = get_type_hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        ftype = hints[f.name]
        if dataclasses.is_dataclass(ftype) and isinstance(value, dict):
            value = config_from_dict(value, ftype)
        kwargs[f.name] = value
    return cls(**kwargs)


def flatten_config(cfg, prefix: str = "") -> dict[str, Any]:
    """Dotted-key view of a config tree, e.g. {'estimator.slot_s': 2.0}."""
    out: dict[str, Any] = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            out.update(flatten_config(value, prefix=f"{key}."))
        else:
            out[key] = value
    return out


def apply_overrides(data: dict, overrides: dict[str, str]) -> dict:
    """Apply dotted-key string overrides onto a nested config dict in place.

    Values are coerced to the type of the default at that key; unknown keys
    raise so typos do not pass silently.
    """
    defaults = flatten_config(default_config())
    for dotted, raw in overrides.items():
        if dotted not in defaults:
            raise KeyError(f"unknown config key {dotted!r}")
        node = data
        *parents, leaf = dotted.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = _coerce(raw, defaults[dotted])
    return data


def _coerce(raw: str, default: Any) -> Any:
    if isinstance(default, bool):
        lowered = str(raw).strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean from {raw!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if default is None or isinstance(default, str):
        return str(raw)
    raise ValueError(f"cannot override key with default of type {type(default).__name__}")


def load_config(path=None, overrides: Optional[dict[str, str]] = None) -> GlobalConfig:
    """Defaults, optionally updated from a JSON file, then dotted overrides."""
    data = config_to_dict(default_config())
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            _deep_update(data, json.load(fh))
    if overrides:
        apply_overrides(data, overrides)
    return config_from_dict(data)


def save_config(cfg: GlobalConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")


def _deep_update(base: dict, update: dict) -> dict:
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base
