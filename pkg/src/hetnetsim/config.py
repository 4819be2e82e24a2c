"""Simulation configuration: defaults, JSON loading, dotted overrides, validation."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .channel import ChannelParams
from .linkmath import AlgorithmConfig

POLICY_NAMES = ("max_rsrp", "cio", "semi_distributive", "distributive")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field when known."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class TopologyConfig(_Section):
    isd: float = Field(500.0, gt=0)
    macro_sites: Literal[1, 7, 19] = 7
    sectors_per_site: int = Field(3, ge=1)
    small_per_sector: int = Field(4, ge=0)
    users_per_sector: int = Field(25, ge=0)
    hotspot_fraction: float = Field(2.0 / 3.0, ge=0, le=1)
    hotspot_radius: float = Field(40.0, gt=0)
    indoor_ratio: float = Field(0.8, ge=0, le=1)
    max_capacity: float = Field(2000.0, ge=0)
    macro_height: float = Field(25.0, gt=0)
    small_height: float = Field(10.0, gt=0)
    ue_height: float = Field(1.5, gt=0)
    small_min_separation_macro: float = Field(75.0, ge=0)
    small_min_separation_small: float = Field(40.0, ge=0)
    placement_retries: int = Field(1000, ge=1)
    total_bandwidth: float = Field(10e6, gt=0)
    macro_dl_tx_power: float = 46.0
    small_dl_tx_power: float = 30.0
    macro_antenna_gain: float = 14.0
    small_antenna_gain: float = 5.0
    bs_noise_figure: float = Field(5.0, ge=0)
    ue_noise_figure: float = Field(7.0, ge=0)
    ue_max_tx_power: float = 20.0
    ue_antenna_gain: float = 0.0


class ChannelConfig(_Section):
    carrier_frequency: float = Field(2e9, gt=0)
    macro_pathloss_ref_db: float = 128.1
    macro_pathloss_exponent: float = Field(3.76, gt=2)
    small_pathloss_ref_db: float = 140.7
    small_pathloss_exponent: float = Field(3.67, gt=2)
    shadowing_sigma_macro: float = Field(8.0, ge=0)
    shadowing_sigma_small: float = Field(10.0, ge=0)
    indoor_penetration_loss: float = Field(20.0, ge=0)
    thermal_noise_density: float = -174.0
    beamwidth_3db: float = Field(70.0, gt=0)
    max_attenuation: float = Field(25.0, ge=0)
    min_distance: float = Field(10.0, gt=0)


class AlgorithmSection(_Section):
    association_exponent: float = Field(0.5, ge=0, le=1)
    sinr_floor_db: float | None = 0.0
    search_step: float = Field(0.05, gt=0)
    power_tolerance_db: float = Field(0.01, gt=0)
    max_power_iterations: int = Field(100, ge=1)
    cio_offset_db: float = 6.0
    intra_cell_interference: bool = True
    interference_model: Literal["spectral_overlap", "full"] = "spectral_overlap"
    sizing_interference: Literal["max_power", "current"] = "max_power"


class SimulationSection(_Section):
    drops: int = Field(50, ge=1)
    seed: int = Field(0, ge=0)
    policies: list[Literal["max_rsrp", "cio", "semi_distributive", "distributive"]] = Field(
        default_factory=lambda: list(POLICY_NAMES), min_length=1)


class OutputSection(_Section):
    out_dir: str = "results"
    cdf_resolution_db: float = Field(0.1, gt=0)


class SimConfig(_Section):
    topology: TopologyConfig = Field(default_factory=TopologyConfig)
    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    algorithm: AlgorithmSection = Field(default_factory=AlgorithmSection)
    simulation: SimulationSection = Field(default_factory=SimulationSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _unique_policies(self):
        if len(set(self.simulation.policies)) != len(self.simulation.policies):
            raise ValueError("simulation.policies contains duplicates")
        return self

    def channel_params(self) -> ChannelParams:
        c = self.channel
        return ChannelParams.from_reference(
            macro_ref_db=c.macro_pathloss_ref_db, macro_exponent=c.macro_pathloss_exponent,
            small_ref_db=c.small_pathloss_ref_db, small_exponent=c.small_pathloss_exponent,
            carrier_frequency=c.carrier_frequency, shadowing_sigma_macro=c.shadowing_sigma_macro,
            shadowing_sigma_small=c.shadowing_sigma_small, indoor_penetration_loss=c.indoor_penetration_loss,
            thermal_noise_density=c.thermal_noise_density, beamwidth_3db=c.beamwidth_3db,
            max_attenuation=c.max_attenuation, d_min=c.min_distance)

    def algorithm_config(self) -> AlgorithmConfig:
        return AlgorithmConfig(**self.algorithm.model_dump())

    def resolved(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **dotted) -> "SimConfig":
        return build_config(self.resolved(), dotted)


def _set_dotted(tree: dict, key: str, value):
    parts = key.split(".")
    node = tree
    for p in parts[:-1]:
        nxt = node.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ConfigError("not a section", key)
        node = nxt
    node[parts[-1]] = value


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_override(item: str) -> tuple[str, object]:
    """``"section.field=value"`` -> ``("section.field", value)``; values parse as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    return key.strip(), _coerce(raw.strip())


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def build_config(data: dict | None = None, overrides: dict | None = None) -> SimConfig:
    tree = _deep_merge({}, data or {})
    for key, value in (overrides or {}).items():
        _set_dotted(tree, key, value)
    try:
        return SimConfig.model_validate(tree)
    except ValidationError as exc:
        err = exc.errors()[0]
        path = ".".join(str(p) for p in err["loc"])
        kind = "unknown key" if err["type"] == "extra_forbidden" else err["msg"]
        raise ConfigError(kind, path or None) from None


def parse_config(path: str | Path | None = None, overrides: dict | list[str] | None = None) -> SimConfig:
    """Defaults, then the JSON file at ``path``, then ``overrides`` (dotted keys)."""
    data = {}
    if path is not None:
        text = Path(path).read_text()
        if text.strip():
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a JSON object")
    if isinstance(overrides, list):
        overrides = dict(parse_override(o) for o in overrides)
    return build_config(data, overrides)
