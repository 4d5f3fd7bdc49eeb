"""Experiment configuration: system presets, channel block, sweep settings."""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple

from ..errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "SystemDims",
    "ChannelBlock",
    "ExperimentConfig",
    "PRESETS",
    "ESTIMATORS",
    "preset",
    "load_config",
    "config_from_dict",
]

ESTIMATORS = ("ls", "mmse", "omp", "bl", "mbl")
INF_BITS = math.inf


@dataclass(frozen=True)
class SystemDims:
    n_tx: int
    n_rx: int
    n_rf: int
    m_tx: int
    m_rx: int
    g_tx: int
    g_rx: int

    def validate(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ConfigError(f"system.{f.name} must be >= 1")
        if self.n_tx % self.n_rf or self.n_rx % self.n_rf:
            raise ConfigError("system.n_rf must divide n_tx and n_rx")
        n_f, n_c = self.n_tx // self.n_rf, self.n_rx // self.n_rf
        if self.m_tx % n_f or self.m_rx % n_c:
            raise ConfigError("n_tx/n_rf must divide m_tx and n_rx/n_rf must divide m_rx")
        if self.m_tx > self.n_tx or self.m_rx > self.n_rx:
            raise ConfigError("system.m_tx/m_rx cannot exceed n_tx/n_rx")


PRESETS = {
    "system1": SystemDims(32, 32, 8, 24, 24, 36, 36),
    "system2": SystemDims(16, 16, 4, 12, 12, 20, 20),
}


@dataclass(frozen=True)
class ChannelBlock:
    """Channel-generator settings. ``k_abs`` None means the bundled line catalog."""

    f_hz: float = 0.3e12
    d_m: float = 10.0
    n_nlos: int = 4
    n_ray: int = 1
    reflection_orders: Tuple[int, ...] = (1, 1, 1, 2)
    gains_db: float = 25.0
    gain_convention: str = "power"
    surfaces: Tuple[str, ...] = ("plaster", "wood", "glass")
    k_abs: Optional[float] = None
    catalog: Optional[str] = None
    pressure_atm: float = 1.0
    temperature_k: float = 296.0

    def validate(self):
        if not self.f_hz > 0 or not self.d_m > 0:
            raise ConfigError("channel.f_hz and channel.d_m must be positive")
        if self.n_ray < 1 or self.n_nlos < 0:
            raise ConfigError("channel.n_ray must be >= 1 and n_nlos >= 0")
        if len(self.reflection_orders) != self.n_nlos:
            raise ConfigError("channel.reflection_orders needs one entry per NLoS cluster")
        if self.gain_convention not in ("power", "amplitude"):
            raise ConfigError("channel.gain_convention must be 'power' or 'amplitude'")
        if self.k_abs is not None and self.k_abs < 0:
            raise ConfigError("channel.k_abs must be non-negative")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    system: SystemDims = PRESETS["system2"]
    channel: ChannelBlock = field(default_factory=ChannelBlock)
    snr_grid: Tuple[float, ...] = (-10.0, 0.0, 10.0)
    n_trials: int = 100
    first_trial: int = 0
    estimators: Tuple[str, ...] = ("ls", "omp", "bl", "mbl")
    mbl_M: int = 5
    adc_bits: Tuple[float, ...] = (3, 4, 6, INF_BITS)
    adc_full_scale: Optional[float] = None
    seed: int = 0
    n_streams: int = 2
    p_t: float = 1.0
    omp_max_iters: Optional[int] = None
    omp_normalize: bool = True
    bl_epsilon: float = 1e-6
    bl_k_max: int = 50
    bl_gamma_floor: float = 1e-12
    sounding_mixing: str = "dft"
    aps_bits: Optional[int] = None
    design_csi: str = "reconstructed"
    ber_symbols: int = 10_000
    include_bcrlb: bool = True
    workers: int = 1

    def validate(self):
        self.system.validate()
        self.channel.validate()
        if not self.snr_grid:
            raise ConfigError("snr_grid must be non-empty")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.first_trial < 0:
            raise ConfigError("first_trial must be >= 0")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad or not self.estimators:
            raise ConfigError(f"unknown estimators {bad}; choose from {ESTIMATORS}")
        if self.mbl_M < 1:
            raise ConfigError("mbl_M must be >= 1")
        for b in self.adc_bits:
            if not (b == INF_BITS or (float(b).is_integer() and b >= 1)):
                raise ConfigError(f"adc_bits entries must be integers >= 1 or 'inf', got {b}")
        if self.adc_full_scale is not None and not self.adc_full_scale > 0:
            raise ConfigError("adc_full_scale must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not 1 <= self.n_streams <= self.system.n_rf:
            raise ConfigError("n_streams must lie in [1, n_rf]")
        if not self.p_t > 0:
            raise ConfigError("p_t must be positive")
        if self.omp_max_iters is not None and self.omp_max_iters < 1:
            raise ConfigError("omp_max_iters must be >= 1")
        if not self.bl_epsilon > 0 or self.bl_k_max < 1 or not self.bl_gamma_floor > 0:
            raise ConfigError("invalid BL stopping parameters")
        if self.sounding_mixing not in ("identity", "dft"):
            raise ConfigError("sounding_mixing must be 'identity' or 'dft'")
        if self.aps_bits is not None and self.aps_bits < 1:
            raise ConfigError("aps_bits must be >= 1")
        if self.design_csi not in ("reconstructed", "true"):
            raise ConfigError("design_csi must be 'reconstructed' or 'true'")
        if self.ber_symbols < 1:
            raise ConfigError("ber_symbols must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    @property
    def omp_iteration_cap(self):
        # the hybrid stage can use at most N_RF AoDs x N_RF AoAs
        return self.omp_max_iters or self.system.n_rf ** 2

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw).validate()

    def to_dict(self):
        d = asdict(self)
        d["adc_bits"] = ["inf" if b == INF_BITS else int(b) for b in self.adc_bits]
        return d


def preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def _parse_bits(v):
    if isinstance(v, str):
        if v.lower() in ("inf", "infinity"):
            return INF_BITS
        raise ConfigError(f"adc_bits entry {v!r} is not a count or 'inf'")
    if v == INF_BITS:
        return INF_BITS
    if isinstance(v, bool) or not float(v).is_integer():
        raise ConfigError(f"adc_bits entry {v!r} is not a whole number of bits")
    return int(v)


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a table/object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")
    return data


def config_from_dict(data):
    """Build and validate an ExperimentConfig from a plain mapping.

    Accepts either the experiment fields at top level or nested under an
    ``experiment`` key. ``system`` may be a preset name or explicit dims.
    """
    if "experiment" in data and isinstance(data["experiment"], dict):
        data = data["experiment"]
    data = dict(_build(ExperimentConfig, data, "experiment"))
    try:
        if "preset" in data:
            raise ConfigError("use 'system' for the preset name")
        system = data.get("system", "system2")
        if isinstance(system, str):
            data["system"] = preset(system)
        else:
            data["system"] = SystemDims(**_build(SystemDims, system, "system"))
        if "channel" in data:
            ch = dict(_build(ChannelBlock, data["channel"], "channel"))
            for key in ("reflection_orders", "surfaces"):
                if key in ch:
                    ch[key] = tuple(ch[key])
            data["channel"] = ChannelBlock(**ch)
        for key in ("snr_grid", "estimators"):
            if key in data:
                data[key] = tuple(data[key])
        if "snr_grid" in data:
            data["snr_grid"] = tuple(float(s) for s in data["snr_grid"])
        if "adc_bits" in data:
            data["adc_bits"] = tuple(_parse_bits(b) for b in data["adc_bits"])
        cfg = ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return cfg.validate()


def load_config(path):
    """Read a TOML (``.toml``) or JSON experiment block."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw)
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data)
