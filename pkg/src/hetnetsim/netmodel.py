"""Domain types and topology generation for a two-tier hexagonal HetNet.

Macro sites sit on a hexagonal lattice with inter-site distance ``isd``.
Each site carries three sectors; every sector owns a flat-top hexagonal
region of circumradius ``isd / 3`` that has the site at one of its vertices.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

SQRT3 = math.sqrt(3.0)


class TopologyError(ValueError):
    """Unsupported layout request."""


class PlacementError(RuntimeError):
    """Small cells could not be placed under the separation constraints."""


class Tier(str, enum.Enum):
    MACRO = "macro"
    SMALL = "small"


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite position ({self.x}, {self.y})")


@dataclass(frozen=True)
class BaseStation:
    id: int
    tier: Tier
    site_position: Position
    height: float
    total_bandwidth: float
    dl_tx_power: float
    antenna_gain_peak: float
    noise_figure: float
    sector_azimuth: float | None = None
    cio_offset: float = 0.0
    sector: int = -1  # index of the macro sector the BS belongs to

    def __post_init__(self):
        if self.total_bandwidth <= 0:
            raise ValueError("total_bandwidth must be positive")
        if self.tier is Tier.MACRO and self.cio_offset != 0.0:
            raise ValueError("macro base stations carry no CIO offset")


@dataclass(frozen=True)
class UserEquipment:
    id: int
    position: Position
    indoor: bool
    capacity_requirement: float
    max_tx_power: float = 20.0
    height: float = 1.5
    antenna_gain: float = 0.0
    sector: int = -1


@dataclass
class Topology:
    base_stations: list[BaseStation]
    users: list[UserEquipment] = field(default_factory=list)
    isd: float = 500.0
    sectors_per_macro: int = 3
    small_per_sector: int = 0

    @property
    def macro_cells(self) -> list[BaseStation]:
        return [bs for bs in self.base_stations if bs.tier is Tier.MACRO]

    @property
    def small_cells(self) -> list[BaseStation]:
        return [bs for bs in self.base_stations if bs.tier is Tier.SMALL]

    def sector_centers(self) -> np.ndarray:
        """Centres of the sector hexagons, one row per macro BS."""
        r = self.isd / 3.0
        rows = []
        for bs in self.macro_cells:
            az = math.radians(bs.sector_azimuth)
            rows.append((bs.site_position.x + r * math.cos(az),
                         bs.site_position.y + r * math.sin(az)))
        return np.array(rows, dtype=float).reshape(-1, 2)

    def bs_arrays(self) -> dict[str, np.ndarray]:
        bss = self.base_stations
        return {
            "xy": np.array([[b.site_position.x, b.site_position.y] for b in bss], dtype=float).reshape(-1, 2),
            "height": np.array([b.height for b in bss], dtype=float),
            "is_macro": np.array([b.tier is Tier.MACRO for b in bss], dtype=bool),
            "azimuth": np.array([b.sector_azimuth if b.sector_azimuth is not None else 0.0 for b in bss]),
            "bandwidth": np.array([b.total_bandwidth for b in bss], dtype=float),
            "dl_tx_power": np.array([b.dl_tx_power for b in bss], dtype=float),
            "gain_peak": np.array([b.antenna_gain_peak for b in bss], dtype=float),
            "noise_figure": np.array([b.noise_figure for b in bss], dtype=float),
            "cio": np.array([b.cio_offset for b in bss], dtype=float),
        }

    def ue_arrays(self) -> dict[str, np.ndarray]:
        ues = self.users
        return {
            "xy": np.array([[u.position.x, u.position.y] for u in ues], dtype=float).reshape(-1, 2),
            "height": np.array([u.height for u in ues], dtype=float),
            "indoor": np.array([u.indoor for u in ues], dtype=bool),
            "demand": np.array([u.capacity_requirement for u in ues], dtype=float),
            "max_tx_power": np.array([u.max_tx_power for u in ues], dtype=float),
            "gain": np.array([u.antenna_gain for u in ues], dtype=float),
        }

    def to_dict(self) -> dict:
        def enc(obj):
            d = asdict(obj)
            if "tier" in d:
                d["tier"] = obj.tier.value
            return d
        return {
            "isd": self.isd,
            "sectors_per_macro": self.sectors_per_macro,
            "small_per_sector": self.small_per_sector,
            "base_stations": [enc(b) for b in self.base_stations],
            "users": [enc(u) for u in self.users],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        bss = []
        for b in d["base_stations"]:
            b = dict(b)
            b["tier"] = Tier(b["tier"])
            b["site_position"] = Position(**b["site_position"])
            bss.append(BaseStation(**b))
        ues = []
        for u in d["users"]:
            u = dict(u)
            u["position"] = Position(**u["position"])
            ues.append(UserEquipment(**u))
        return cls(base_stations=bss, users=ues, isd=d["isd"],
                   sectors_per_macro=d["sectors_per_macro"], small_per_sector=d["small_per_sector"])


# -- geometry -----------------------------------------------------------------

def _site_positions(isd: float, macro_count: int) -> list[tuple[float, float]]:
    rings = {1: 0, 7: 1, 19: 2}
    if macro_count not in rings:
        raise TopologyError(f"unsupported macro_count {macro_count}; use 1, 7 or 19")
    sites = []
    n_rings = rings[macro_count]
    # axial coordinates on a lattice with basis vectors at 0 and 60 degrees
    for q in range(-n_rings, n_rings + 1):
        for r in range(-n_rings, n_rings + 1):
            if abs(q + r) > n_rings:
                continue
            sites.append((isd * (q + 0.5 * r), isd * (SQRT3 / 2.0) * r))
    sites.sort(key=lambda p: (round(math.hypot(*p), 6), round(math.atan2(p[1], p[0]) % (2 * math.pi), 9)))
    return sites


def in_hexagon(points: np.ndarray, centers: np.ndarray, radius: float) -> np.ndarray:
    """Membership of ``points`` (N, 2) in flat-top hexagons at ``centers`` (M, 2).

    Returns an (N, M) boolean array. Boundaries count as inside.
    """
    d = np.abs(points[:, None, :] - centers[None, :, :])
    dx, dy = d[..., 0], d[..., 1]
    eps = 1e-9 * radius
    return (dy <= SQRT3 / 2.0 * radius + eps) & (SQRT3 * dx + dy <= SQRT3 * radius + eps)


def _sample_in_hexagon(center: np.ndarray, radius: float, n: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((0, 2))
    while len(out) < n:
        m = max(2 * (n - len(out)), 8)
        cand = center + rng.uniform([-radius, -SQRT3 / 2 * radius], [radius, SQRT3 / 2 * radius], size=(m, 2))
        keep = in_hexagon(cand, center[None, :], radius)[:, 0]
        out = np.vstack([out, cand[keep]])
    return out[:n]


def build_hex_grid(isd: float = 500.0, macro_count: int = 7, sectors: int = 3, *,
                   bandwidth: float = 10e6, height: float = 25.0, dl_tx_power: float = 46.0,
                   antenna_gain_peak: float = 14.0, noise_figure: float = 5.0) -> Topology:
    """Macro-only topology: ``macro_count`` sites, ``sectors`` co-located BS each."""
    if isd <= 0:
        raise TopologyError("isd must be positive")
    if sectors < 1:
        raise TopologyError("need at least one sector per site")
    bss = []
    for site in _site_positions(isd, macro_count):
        pos = Position(*site)
        for k in range(sectors):
            bss.append(BaseStation(
                id=len(bss), tier=Tier.MACRO, site_position=pos, height=height,
                sector_azimuth=360.0 * k / sectors, total_bandwidth=bandwidth,
                dl_tx_power=dl_tx_power, antenna_gain_peak=antenna_gain_peak,
                noise_figure=noise_figure, sector=len(bss)))
    return Topology(base_stations=bss, isd=isd, sectors_per_macro=sectors)


def place_small_cells(topology: Topology, small_per_sector: int, rng: np.random.Generator, *,
                      min_separation: float = 75.0, min_small_separation: float = 40.0,
                      max_retries: int = 1000, bandwidth: float = 10e6, height: float = 10.0,
                      dl_tx_power: float = 30.0, antenna_gain_peak: float = 5.0,
                      noise_figure: float = 5.0, cio_offset: float = 0.0) -> Topology:
    """Drop ``small_per_sector`` small cells uniformly inside every sector hexagon.

    Each small cell keeps ``min_separation`` metres from its macro site and
    ``min_small_separation`` from previously placed small cells.
    """
    if small_per_sector < 0:
        raise TopologyError("small_per_sector must be non-negative")
    macros = topology.macro_cells
    centers = topology.sector_centers()
    radius = topology.isd / 3.0
    bss = list(macros)
    placed: list[np.ndarray] = []
    for m, bs in enumerate(macros):
        site = np.array([bs.site_position.x, bs.site_position.y])
        for _ in range(small_per_sector):
            for _attempt in range(max_retries):
                p = _sample_in_hexagon(centers[m], radius, 1, rng)[0]
                if np.hypot(*(p - site)) < min_separation:
                    continue
                if placed and np.min(np.hypot(*(np.array(placed) - p).T)) < min_small_separation:
                    continue
                break
            else:
                raise PlacementError(f"could not place small cell in sector {m} after {max_retries} tries")
            placed.append(p)
            bss.append(BaseStation(
                id=len(bss), tier=Tier.SMALL, site_position=Position(float(p[0]), float(p[1])),
                height=height, total_bandwidth=bandwidth, dl_tx_power=dl_tx_power,
                antenna_gain_peak=antenna_gain_peak, noise_figure=noise_figure,
                cio_offset=cio_offset, sector=m))
    return replace(topology, base_stations=bss, small_per_sector=small_per_sector)


def place_users(topology: Topology, users_per_sector: int, rng: np.random.Generator, *,
                hotspot_fraction: float = 2.0 / 3.0, hotspot_radius: float = 40.0,
                indoor_ratio: float = 0.8, max_capacity: float = 2000.0,
                max_tx_power: float = 20.0, height: float = 1.5, antenna_gain: float = 0.0) -> Topology:
    """Populate every sector with users, a share of them clustered around small cells."""
    if not 0.0 <= hotspot_fraction <= 1.0:
        raise ValueError("hotspot_fraction must lie in [0, 1]")
    if users_per_sector < 0:
        raise ValueError("users_per_sector must be non-negative")
    centers = topology.sector_centers()
    radius = topology.isd / 3.0
    smalls_by_sector: dict[int, list[BaseStation]] = {}
    for bs in topology.small_cells:
        smalls_by_sector.setdefault(bs.sector, []).append(bs)

    users = []
    n_hot = int(round(hotspot_fraction * users_per_sector))
    for m in range(len(centers)):
        smalls = smalls_by_sector.get(m, [])
        pts = []
        for k in range(users_per_sector):
            if k < n_hot and smalls:
                anchor = smalls[rng.integers(len(smalls))].site_position
                while True:
                    rho = hotspot_radius * math.sqrt(rng.uniform())
                    phi = rng.uniform(0.0, 2 * math.pi)
                    p = np.array([anchor.x + rho * math.cos(phi), anchor.y + rho * math.sin(phi)])
                    if in_hexagon(p[None, :], centers, radius).any():
                        break
            else:
                p = _sample_in_hexagon(centers[m], radius, 1, rng)[0]
            pts.append(p)
        indoor = rng.uniform(size=users_per_sector) < indoor_ratio
        demand = rng.uniform(0.0, max_capacity, size=users_per_sector)
        for p, ind, c in zip(pts, indoor, demand):
            users.append(UserEquipment(
                id=len(users), position=Position(float(p[0]), float(p[1])), indoor=bool(ind),
                capacity_requirement=float(c), max_tx_power=max_tx_power, height=height,
                antenna_gain=antenna_gain, sector=m))
    return replace(topology, users=users)


def distance(ue: UserEquipment, bs: BaseStation, d_min: float = 10.0) -> float:
    """3D UE-BS distance, floored at ``d_min``."""
    d = math.sqrt((ue.position.x - bs.site_position.x) ** 2
                  + (ue.position.y - bs.site_position.y) ** 2
                  + (ue.height - bs.height) ** 2)
    return max(d_min, d)


def distance_matrix(topology: Topology, d_min: float = 10.0) -> np.ndarray:
    ue, bs = topology.ue_arrays(), topology.bs_arrays()
    dxy = ue["xy"][:, None, :] - bs["xy"][None, :, :]
    dz = ue["height"][:, None] - bs["height"][None, :]
    d = np.sqrt(dxy[..., 0] ** 2 + dxy[..., 1] ** 2 + dz ** 2)
    return np.maximum(d, d_min)
