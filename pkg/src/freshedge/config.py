"""Environment configuration and the flat ``key=value`` config file format.

Sizes are bytes, rates bytes/s, bandwidth Hz, computing rates cycles/s.
Spectral efficiencies are given in bits/s/Hz and converted to bytes/s/Hz
by :meth:`EnvConfig.byte_efficiency`. Service indices are 0-based.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from typing import Mapping

import numpy as np

ENV_PREFIX = "FRESHEDGE_"

GB = 1e9
MB = 1e6


class ConfigError(ValueError):
    pass


@dataclass
class EnvConfig:
    num_users: int = 5
    num_services: int = 10
    horizon: int = 1152
    slot_length: float = 900.0
    storage_capacity: float = 16 * GB
    compute_capacity: float = 5.4e9
    uplink_bw: float = 40e6
    downlink_bw: float = 40e6
    es_cs_rate: float = 25 * MB
    cloud_rate_per_task: float = 2e9
    spectral_eff_up: tuple[float, ...] = (3.0,)
    spectral_eff_down: tuple[float, ...] = (4.0,)
    lambda_D: float = 0.1
    lambda_c: float = 1.0
    lambda_p: float = 1.0
    lambda_s: float = 10.0
    lyapunov_V: float = 1.0
    # empty -> drawn once per run from aoi_threshold_range
    aoi_thresholds: tuple[float, ...] = ()
    aoi_threshold_range: tuple[float, float] = (5.0, 10.0)
    service_size_range: tuple[float, float] = (2 * GB, 6 * GB)
    purchase_price_range: tuple[float, float] = (1.0, 50.0)
    refresh_price_ratio: float = 0.1
    task_size_min: float = 500 * MB
    task_size_max: float = 2 * GB
    task_size_mean: float = 1.25 * GB
    task_size_std: float = 0.5 * GB
    result_size_ratio: float = 0.1
    cycles_per_byte: float = 330.0
    cs_update_prob: float = 0.25
    num_samples: int = 16
    fixed_services: tuple[int, ...] = (0, 1)
    rng_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.num_users < 1 or self.num_services < 1:
            raise ConfigError("num_users and num_services must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        positive = ("slot_length", "storage_capacity", "compute_capacity", "uplink_bw",
                    "downlink_bw", "es_cs_rate", "cloud_rate_per_task", "cycles_per_byte",
                    "task_size_min", "task_size_max", "task_size_std", "result_size_ratio")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        for name in ("lambda_D", "lambda_c", "lambda_p", "lambda_s", "lyapunov_V"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        for name in ("service_size_range", "purchase_price_range", "aoi_threshold_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"{name} must satisfy 0 < low <= high")
        if self.task_size_min > self.task_size_max:
            raise ConfigError("task_size_min exceeds task_size_max")
        if not 0 < self.refresh_price_ratio <= 1:
            raise ConfigError("refresh_price_ratio must lie in (0, 1]")
        if not 0 <= self.cs_update_prob <= 1:
            raise ConfigError("cs_update_prob must lie in [0, 1]")
        for name, n in (("spectral_eff_up", self.num_users), ("spectral_eff_down", self.num_users)):
            eff = getattr(self, name)
            if len(eff) not in (1, n) or min(eff) <= 0:
                raise ConfigError(f"{name} needs 1 or {n} positive values")
        if self.aoi_thresholds:
            if len(self.aoi_thresholds) != self.num_services:
                raise ConfigError("aoi_thresholds needs one value per service")
            if min(self.aoi_thresholds) < 1:
                raise ConfigError("aoi_thresholds must be >= 1 slot")
        if self.aoi_threshold_range[0] < 1:
            raise ConfigError("aoi_threshold_range must be >= 1 slot")
        if self.num_samples < 1:
            raise ConfigError("num_samples must be >= 1")
        if not self.fixed_services or any(not 0 <= j < self.num_services for j in self.fixed_services):
            raise ConfigError("fixed_services must be a nonempty list of valid service indices")

    def byte_efficiency(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-user (uplink, downlink) efficiency in bytes/s/Hz."""
        up = np.broadcast_to(np.asarray(self.spectral_eff_up, float), (self.num_users,)) / 8.0
        down = np.broadcast_to(np.asarray(self.spectral_eff_down, float), (self.num_users,)) / 8.0
        return up.copy(), down.copy()

    def replace(self, **changes) -> "EnvConfig":
        return dataclasses.replace(self, **changes)


def _field_types() -> dict[str, str]:
    return {f.name: str(f.type) for f in fields(EnvConfig)}


def _parse_value(name: str, raw: str, type_name: str):
    raw = raw.strip()
    try:
        if type_name == "int":
            return int(float(raw))
        if type_name == "float":
            return float(raw)
        if type_name.startswith("tuple"):
            items = [s.strip() for s in raw.replace(";", ",").split(",") if s.strip()]
            cast = int if "int" in type_name else float
            return tuple(cast(float(s)) if cast is int else cast(s) for s in items)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    raise ConfigError(f"unsupported field type for {name}")


def parse_overrides(pairs: Mapping[str, str], base: EnvConfig | None = None) -> EnvConfig:
    types = _field_types()
    changes = {}
    for key, raw in pairs.items():
        if key not in types:
            raise ConfigError(f"unknown config key: {key}")
        changes[key] = _parse_value(key, raw, types[key])
    base = base or EnvConfig()
    return dataclasses.replace(base, **changes)


def read_config_text(text: str) -> dict[str, str]:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        pairs[key] = value
    return pairs


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, str]:
    """Collect ``FRESHEDGE_<KEY>`` variables; KEY is matched case-insensitively."""
    environ = os.environ if environ is None else environ
    by_upper = {name.upper(): name for name in _field_types()}
    out = {}
    for var, value in environ.items():
        if not var.startswith(ENV_PREFIX):
            continue
        key = var[len(ENV_PREFIX):]
        if key.upper() not in by_upper:
            raise ConfigError(f"unknown config key in environment: {var}")
        out[by_upper[key.upper()]] = value
    return out


def load_config(path: str | os.PathLike | None = None,
                environ: Mapping[str, str] | None = None) -> EnvConfig:
    pairs = {}
    if path is not None:
        with open(path) as fh:
            pairs.update(read_config_text(fh.read()))
    pairs.update(env_overrides(environ))
    return parse_overrides(pairs)


def format_config(cfg: EnvConfig) -> str:
    lines = []
    for f in fields(EnvConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        else:
            value = repr(value)
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"
