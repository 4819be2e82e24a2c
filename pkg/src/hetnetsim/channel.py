"""Link-budget evaluation: antenna patterns, path loss, shadowing, noise, RSRP."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netmodel import BaseStation, Position, Tier, Topology, UserEquipment, distance, distance_matrix


def db2lin(x):
    return np.power(10.0, np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


def dbm2watt(x):
    return np.power(10.0, (np.asarray(x, dtype=float) - 30.0) / 10.0)


def watt2dbm(x):
    return 10.0 * np.log10(x) + 30.0


def _pathloss_constant(ref_loss_db: float, exponent: float, ref_distance: float = 1000.0) -> float:
    # a * d^-beta equals the reference loss at ref_distance
    return 10.0 ** (-ref_loss_db / 10.0) * ref_distance ** exponent


@dataclass(frozen=True)
class ChannelParams:
    pathloss_constant_macro: float
    pathloss_exponent_macro: float
    pathloss_constant_small: float
    pathloss_exponent_small: float
    shadowing_sigma_macro: float = 8.0
    shadowing_sigma_small: float = 10.0
    indoor_penetration_loss: float = 20.0
    thermal_noise_density: float = -174.0
    carrier_frequency: float = 2e9
    beamwidth_3db: float = 70.0
    max_attenuation: float = 25.0
    d_min: float = 10.0

    def __post_init__(self):
        if min(self.pathloss_exponent_macro, self.pathloss_exponent_small) <= 2:
            raise ValueError("path-loss exponent must exceed 2")
        if min(self.pathloss_constant_macro, self.pathloss_constant_small) <= 0:
            raise ValueError("path-loss constant must be positive")
        if min(self.shadowing_sigma_macro, self.shadowing_sigma_small) < 0:
            raise ValueError("shadowing sigma must be non-negative")

    @classmethod
    def from_reference(cls, macro_ref_db: float = 128.1, macro_exponent: float = 3.76,
                       small_ref_db: float = 140.7, small_exponent: float = 3.67,
                       carrier_frequency: float = 2e9, **kw) -> "ChannelParams":
        """Build from 1 km reference losses quoted at 2 GHz.

        Other carriers get a free-space style 20 log10(f / 2 GHz) correction.
        """
        corr = 20.0 * math.log10(carrier_frequency / 2e9)
        return cls(
            pathloss_constant_macro=_pathloss_constant(macro_ref_db + corr, macro_exponent),
            pathloss_exponent_macro=macro_exponent,
            pathloss_constant_small=_pathloss_constant(small_ref_db + corr, small_exponent),
            pathloss_exponent_small=small_exponent,
            carrier_frequency=carrier_frequency, **kw)

    def pathloss_terms(self, tier: Tier) -> tuple[float, float]:
        if tier is Tier.MACRO:
            return self.pathloss_constant_macro, self.pathloss_exponent_macro
        return self.pathloss_constant_small, self.pathloss_exponent_small

    def sigma(self, tier: Tier) -> float:
        return self.shadowing_sigma_macro if tier is Tier.MACRO else self.shadowing_sigma_small


@dataclass(frozen=True)
class LinkBudget:
    ue_gain: float
    bs_gain: float
    shadowing: float
    pathloss: float

    @property
    def composite_gain(self) -> float:
        return self.ue_gain * self.bs_gain * self.shadowing * self.pathloss

    @property
    def composite_gain_db(self) -> float:
        return (lin2db(self.ue_gain) + lin2db(self.bs_gain)
                + lin2db(self.shadowing) + lin2db(self.pathloss))


class ShadowTable:
    """Per-(UE, BS) shadowing draws, frozen for the lifetime of a drop."""

    def __init__(self, linear: np.ndarray):
        arr = np.array(linear, dtype=float, copy=True)
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __getitem__(self, key) -> float:
        ue_id, bs_id = key
        return float(self._values[ue_id, bs_id])

    @classmethod
    def draw(cls, topology: Topology, params: ChannelParams, rng: np.random.Generator) -> "ShadowTable":
        bs = topology.bs_arrays()
        ue = topology.ue_arrays()
        sigma = np.where(bs["is_macro"], params.shadowing_sigma_macro, params.shadowing_sigma_small)
        z = rng.standard_normal((len(topology.users), len(topology.base_stations)))
        db = z * sigma[None, :] - np.where(ue["indoor"], params.indoor_penetration_loss, 0.0)[:, None]
        return cls(db2lin(db))


def _pattern_db(theta_deg, peak, beamwidth, max_att):
    return peak - np.minimum(12.0 * (theta_deg / beamwidth) ** 2, max_att)


def _off_boresight(dx, dy, azimuth_deg):
    bearing = np.degrees(np.arctan2(dy, dx))
    return (bearing - azimuth_deg + 180.0) % 360.0 - 180.0


def sector_antenna_gain(bs: BaseStation, ue_position: Position, params: ChannelParams | None = None) -> float:
    """Horizontal BS antenna gain toward the UE, linear."""
    if bs.tier is Tier.SMALL or bs.sector_azimuth is None:
        return float(db2lin(bs.antenna_gain_peak))
    bw = params.beamwidth_3db if params else 70.0
    amax = params.max_attenuation if params else 25.0
    theta = _off_boresight(ue_position.x - bs.site_position.x, ue_position.y - bs.site_position.y,
                           bs.sector_azimuth)
    return float(db2lin(_pattern_db(theta, bs.antenna_gain_peak, bw, amax)))


def sample_shadowing(tier: Tier, indoor: bool, rng: np.random.Generator, params: ChannelParams) -> float:
    db = rng.normal(0.0, params.sigma(tier))
    if indoor:
        db -= params.indoor_penetration_loss
    return float(db2lin(db))


def link_budget(ue: UserEquipment, bs: BaseStation, params: ChannelParams, shadow_table: ShadowTable) -> LinkBudget:
    a, beta = params.pathloss_terms(bs.tier)
    d = distance(ue, bs, params.d_min)
    return LinkBudget(
        ue_gain=float(db2lin(ue.antenna_gain)),
        bs_gain=sector_antenna_gain(bs, ue.position, params),
        shadowing=shadow_table[ue.id, bs.id],
        pathloss=a * d ** (-beta),
    )


def gain_matrix(topology: Topology, params: ChannelParams, shadow_table: ShadowTable) -> np.ndarray:
    """Composite gains for every (UE, BS) pair, shape (n_users, n_bs)."""
    bs = topology.bs_arrays()
    ue = topology.ue_arrays()
    d = distance_matrix(topology, params.d_min)
    a = np.where(bs["is_macro"], params.pathloss_constant_macro, params.pathloss_constant_small)
    beta = np.where(bs["is_macro"], params.pathloss_exponent_macro, params.pathloss_exponent_small)
    pl = a[None, :] * d ** (-beta[None, :])
    dxy = ue["xy"][:, None, :] - bs["xy"][None, :, :]
    theta = _off_boresight(dxy[..., 0], dxy[..., 1], bs["azimuth"][None, :])
    pattern = _pattern_db(theta, bs["gain_peak"][None, :], params.beamwidth_3db, params.max_attenuation)
    g_bs_db = np.where(bs["is_macro"][None, :], pattern, bs["gain_peak"][None, :])
    g = db2lin(ue["gain"])[:, None] * db2lin(g_bs_db) * shadow_table.values * pl
    return g


def noise_power(bandwidth: float, noise_figure: float, params: ChannelParams | None = None) -> float:
    """Thermal noise over ``bandwidth`` Hz in watts."""
    if np.any(np.asarray(bandwidth) <= 0):
        raise ValueError("bandwidth must be positive")
    n0 = params.thermal_noise_density if params else -174.0
    return dbm2watt(n0 + 10.0 * np.log10(bandwidth) + noise_figure)


def noise_psd(noise_figure: float, params: ChannelParams | None = None) -> float:
    """Noise spectral density in W/Hz."""
    n0 = params.thermal_noise_density if params else -174.0
    return float(dbm2watt(n0 + noise_figure))


def rsrp(ue: UserEquipment, bs: BaseStation, shadow_table: ShadowTable, params: ChannelParams) -> float:
    """Downlink-referenced received power in dBm, used for baseline ranking."""
    return bs.dl_tx_power + link_budget(ue, bs, params, shadow_table).composite_gain_db


def rsrp_matrix(topology: Topology, gains: np.ndarray) -> np.ndarray:
    return topology.bs_arrays()["dl_tx_power"][None, :] + lin2db(gains)
