"""Exhaustive minimum-total-power search on tiny instances.

Every user->BS map and every quantised bandwidth split is enumerated; powers
at each point come from the same fixed-point routine the simulator uses, so
heuristic results evaluated on the same grid are directly comparable.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .assoc import NetworkState, evaluate_allocations, run_association_pass
from .channel import ChannelParams, ShadowTable, gain_matrix
from .linkmath import AlgorithmConfig
from .netmodel import BaseStation, Position, Tier, Topology, UserEquipment

MAX_BS = 3
MAX_USERS = 4


class OracleSizeError(ValueError):
    pass


@dataclass
class MicroInstance:
    gains: np.ndarray            # (n_users, n_bs) composite gains, frozen
    demand: np.ndarray           # bit/s per user
    bandwidth: np.ndarray        # Hz per BS
    quantum: float
    max_tx_power_dbm: float = 20.0
    noise_figure_db: float = 5.0
    thermal_noise_density: float = -174.0
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)

    def __post_init__(self):
        self.gains = np.atleast_2d(np.asarray(self.gains, float))
        self.demand = np.asarray(self.demand, float)
        self.bandwidth = np.asarray(self.bandwidth, float)
        n_u, n_b = self.gains.shape
        if n_b > MAX_BS or n_u > MAX_USERS:
            raise OracleSizeError(f"instance {n_u}x{n_b} exceeds {MAX_USERS} users x {MAX_BS} BS")
        quanta = self.bandwidth / self.quantum
        if not np.allclose(quanta, np.round(quanta), rtol=0, atol=1e-9):
            raise ValueError("quantum must divide every BS bandwidth")
        if self.algorithm.bandwidth_quantum != self.quantum:
            self.algorithm = AlgorithmConfig(**{**asdict(self.algorithm), "bandwidth_quantum": self.quantum})

    @property
    def n_users(self) -> int:
        return self.gains.shape[0]

    @property
    def n_bs(self) -> int:
        return self.gains.shape[1]

    def topology(self) -> Topology:
        bss = [BaseStation(id=b, tier=Tier.SMALL, site_position=Position(0.0, 0.0), height=10.0,
                           total_bandwidth=float(self.bandwidth[b]), dl_tx_power=30.0,
                           antenna_gain_peak=0.0, noise_figure=self.noise_figure_db)
               for b in range(self.n_bs)]
        ues = [UserEquipment(id=u, position=Position(0.0, 0.0), indoor=False,
                             capacity_requirement=float(self.demand[u]), max_tx_power=self.max_tx_power_dbm)
               for u in range(self.n_users)]
        return Topology(base_stations=bss, users=ues)

    def state(self) -> NetworkState:
        return NetworkState(self.topology(), self.gains, self.algorithm,
                            thermal_noise_density=self.thermal_noise_density)

    def to_dict(self) -> dict:
        d = self.topology().to_dict()
        d.update(gains=self.gains.tolist(), bandwidth_quantum=self.quantum,
                 thermal_noise_density=self.thermal_noise_density, algorithm=asdict(self.algorithm))
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "MicroInstance":
        topo = Topology.from_dict(d)
        return cls(gains=np.array(d["gains"]),
                   demand=[u.capacity_requirement for u in topo.users],
                   bandwidth=[b.total_bandwidth for b in topo.base_stations],
                   quantum=d["bandwidth_quantum"],
                   max_tx_power_dbm=topo.users[0].max_tx_power if topo.users else 20.0,
                   noise_figure_db=topo.base_stations[0].noise_figure,
                   thermal_noise_density=d.get("thermal_noise_density", -174.0),
                   algorithm=AlgorithmConfig(**d.get("algorithm", {})))


@dataclass
class OracleResult:
    association: tuple[int, ...] | None
    allocation: tuple[float, ...] | None
    total_power: float
    powers: np.ndarray | None = None

    @property
    def feasible(self) -> bool:
        return self.association is not None


def _coupling_for(state: NetworkState, bs_map: np.ndarray) -> np.ndarray:
    n = len(bs_map)
    c = state.gains[:, bs_map].T.copy()
    np.fill_diagonal(c, 0.0)
    if not state.config.intra_cell_interference:
        c[bs_map[:, None] == bs_map[None, :]] = 0.0
    return c


def _allocations_for(state: NetworkState, bs_map: np.ndarray, q: float) -> np.ndarray:
    hi = np.floor(np.minimum(state.cap, state.total_bandwidth[bs_map]) / q + 1e-9).astype(int)
    if np.any(hi < 1):
        return np.zeros((0, len(bs_map)))
    n_q = np.round(state.total_bandwidth / q).astype(int)
    rows = []
    for k in itertools.product(*[range(1, h + 1) for h in hi]):
        per_bs = np.bincount(bs_map, weights=k, minlength=state.n_bs)
        if np.all(per_bs <= n_q):
            rows.append(k)
    return np.array(rows, dtype=float).reshape(-1, len(bs_map)) * q


def brute_force_min_power(instance: MicroInstance) -> OracleResult:
    """Global minimum of total transmit power over the quantised feasible set."""
    state = instance.state()
    n_u, n_b = instance.n_users, instance.n_bs
    users = np.arange(n_u)
    best = OracleResult(None, None, np.inf)
    if n_u == 0:
        return OracleResult((), (), 0.0, np.zeros(0))
    for bs_map in itertools.product(range(n_b), repeat=n_u):
        bs_map = np.array(bs_map)
        bw = _allocations_for(state, bs_map, instance.quantum)
        if len(bw) == 0:
            continue
        res = evaluate_allocations(state, users, bs_map, bw, _coupling_for(state, bs_map))
        total = np.where(res.feasible, res.powers.sum(axis=-1), np.inf)
        i = int(np.argmin(total))
        if total[i] < best.total_power:
            best = OracleResult(tuple(int(b) for b in bs_map), tuple(float(x) for x in bw[i]),
                                float(total[i]), res.powers[i].copy())
    return best


@dataclass
class HeuristicOutcome:
    policy: str
    total_power: float  # inf when any user was blocked
    association: tuple[int, ...]
    allocation: tuple[float, ...]
    state: NetworkState


def run_heuristic(instance: MicroInstance, policy: str, order=None) -> HeuristicOutcome:
    state = instance.state()
    order = range(instance.n_users) if order is None else order
    run_association_pass(policy, state, order)
    total = np.inf if state.blocked.any() else float(np.sum(state.power[state.active]))
    return HeuristicOutcome(policy, total, tuple(int(b) for b in state.serving),
                            tuple(float(x) for x in state.bandwidth), state)


def random_micro_instance(rng: np.random.Generator, n_bs: int | None = None, n_users: int | None = None,
                          bandwidth: float = 80e3, quanta: int = 8, area: float = 200.0,
                          demand_range=(10e3, 60e3), algorithm: AlgorithmConfig | None = None,
                          max_tries: int = 200) -> MicroInstance:
    """Random small-cell geometry with outdoor users; redraws until the oracle finds a feasible point."""
    params = ChannelParams.from_reference()
    for _ in range(max_tries):
        nb = n_bs or int(rng.integers(1, MAX_BS + 1))
        nu = n_users or int(rng.integers(1, MAX_USERS + 1))
        bss = [BaseStation(id=b, tier=Tier.SMALL,
                           site_position=Position(*map(float, rng.uniform(0, area, 2))), height=10.0,
                           total_bandwidth=bandwidth, dl_tx_power=30.0, antenna_gain_peak=5.0, noise_figure=5.0)
               for b in range(nb)]
        ues = [UserEquipment(id=u, position=Position(*map(float, rng.uniform(0, area, 2))), indoor=False,
                             capacity_requirement=float(rng.uniform(*demand_range)))
               for u in range(nu)]
        topo = Topology(base_stations=bss, users=ues)
        shadow = ShadowTable.draw(topo, params, rng)
        inst = MicroInstance(gains=gain_matrix(topo, params, shadow),
                             demand=[u.capacity_requirement for u in ues],
                             bandwidth=[bandwidth] * nb, quantum=bandwidth / quanta,
                             algorithm=algorithm or AlgorithmConfig())
        if brute_force_min_power(inst).feasible:
            return inst
    raise RuntimeError("could not draw a feasible micro-instance")
