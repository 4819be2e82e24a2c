"""User association policies and the interference-coupled power solve.

Four policies share one sequential driver (:func:`run_association_pass`):

* ``max_rsrp`` / ``cio``: attach to the strongest (offset) downlink RSRP,
  take the minimum bandwidth and transmit at full power.
* ``semi_distributive``: every candidate BS searches the bandwidth multiplier
  for the newcomer while rebalancing its current users; the user then picks
  the BS with the lowest association score.
* ``distributive``: the user grabs twice its minimum bandwidth when the BS
  has room for it, otherwise the minimum, and picks the lowest score.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import linkmath as lm
from .channel import ShadowTable, dbm2watt, gain_matrix, rsrp_matrix
from .linkmath import AlgorithmConfig, ConsistencyError
from .netmodel import Topology

log = logging.getLogger(__name__)

POLICIES = ("max_rsrp", "cio", "semi_distributive", "distributive")
BASELINES = ("max_rsrp", "cio")

# allocations are made against a budget shaved by this factor so that any
# summation order of the per-BS allocations stays within the exact budget
_BUDGET_MARGIN = 1.0 - 1e-12
_MAX_JOINT_ALLOCATIONS = 200_000


@dataclass(frozen=True)
class Association:
    user_id: int
    bs_id: int | None
    allocated_bandwidth: float
    tx_power: float
    achieved_sinr: float

    @property
    def blocked(self) -> bool:
        return self.bs_id is None


@dataclass
class Interferer:
    user_id: int
    power: float
    gain: float


class NetworkState:
    """Mutable per-drop association state.

    Gains are frozen at construction; ``serving``, ``bandwidth`` and
    ``power`` evolve as users arrive.
    """

    def __init__(self, topology: Topology, gains: np.ndarray, config: AlgorithmConfig,
                 shadow_table: ShadowTable | None = None, thermal_noise_density: float = -174.0):
        self.topology = topology
        self.shadow_table = shadow_table
        self.config = config
        self.gains = np.asarray(gains, dtype=float)
        bs = topology.bs_arrays()
        ue = topology.ue_arrays()
        self.n_users, self.n_bs = self.gains.shape
        self.is_macro = bs["is_macro"]
        self.total_bandwidth = bs["bandwidth"]
        self.budget = self.total_bandwidth * _BUDGET_MARGIN
        self.noise_psd = np.power(10.0, (thermal_noise_density + bs["noise_figure"] - 30.0) / 10.0)
        self.rsrp = rsrp_matrix(topology, self.gains) if self.n_users else np.zeros((0, self.n_bs))
        self.cio = bs["cio"]
        self.demand = ue["demand"]
        self.p_max = dbm2watt(ue["max_tx_power"])
        self.cap = config.bandwidth_cap(self.demand)
        self.spread = None if config.interference_model == "full" else self.total_bandwidth

        self.serving = np.full(self.n_users, -1, dtype=int)
        self.bandwidth = np.zeros(self.n_users)
        self.power = np.zeros(self.n_users)
        self.blocked = np.zeros(self.n_users, dtype=bool)
        self.arrival = np.full(self.n_users, -1, dtype=int)
        self._n_arrived = 0
        self.residual = self.total_bandwidth.copy()
        self.converged = True
        self.power_sweeps = 0

    @classmethod
    def from_topology(cls, topology: Topology, channel_params, shadow_table: ShadowTable,
                      config: AlgorithmConfig) -> "NetworkState":
        g = gain_matrix(topology, channel_params, shadow_table)
        return cls(topology, g, config, shadow_table, channel_params.thermal_noise_density)

    # -- bookkeeping ---------------------------------------------------------

    @property
    def active(self) -> np.ndarray:
        return self.serving >= 0

    def spread_for(self, bs_ids):
        return None if self.spread is None else self.spread[bs_ids]

    def allocated(self) -> np.ndarray:
        act = self.active
        return np.bincount(self.serving[act], weights=self.bandwidth[act], minlength=self.n_bs)

    def _refresh_residual(self):
        alloc = self.allocated()
        if np.any(alloc > self.total_bandwidth):
            raise ConsistencyError("bandwidth budget exceeded")
        self.residual = self.total_bandwidth - alloc

    def free(self) -> np.ndarray:
        """Bandwidth still assignable per BS (budget minus allocations)."""
        return self.budget - self.allocated()

    def users_on(self, bs_id: int) -> np.ndarray:
        return np.flatnonzero(self.serving == bs_id)

    def rx_totals(self) -> np.ndarray:
        """Aggregate received power at every BS from all transmitting users."""
        act = self.active
        return self.power[act] @ self.gains[act]

    def intra_totals(self) -> np.ndarray:
        act = self.active
        own = self.power[act] * self.gains[act, self.serving[act]]
        return np.bincount(self.serving[act], weights=own, minlength=self.n_bs)

    def interference_for_new(self, user: int) -> np.ndarray:
        """Interference each BS would see on behalf of a not-yet-associated user."""
        tot = self.rx_totals()
        if not self.config.intra_cell_interference:
            tot = tot - self.intra_totals()
        return np.maximum(tot, 0.0)

    def reference_interference(self, user: int) -> np.ndarray:
        """Interference at every BS if all other non-blocked users sent at full power.

        This is the reference environment for sizing minimum bandwidths.
        """
        others = ~self.blocked
        others[user] = False
        tot = self.p_max[others] @ self.gains[others]
        if not self.config.intra_cell_interference:
            own = others & self.active
            tot = tot - np.bincount(self.serving[own], weights=self.p_max[own] * self.gains[own, self.serving[own]],
                                    minlength=self.n_bs)
        return np.maximum(tot, 0.0)

    def sizing_interference(self, user: int) -> np.ndarray:
        if self.config.sizing_interference == "max_power":
            return self.reference_interference(user)
        return self.interference_for_new(user)

    def sizing_interference_served(self, users: np.ndarray) -> np.ndarray:
        if self.config.sizing_interference != "max_power":
            return self.interference_for_served(users)
        return self._full_power_interference(users)

    def _full_power_interference(self, users: np.ndarray) -> np.ndarray:
        s = self.serving[users]
        live = ~self.blocked
        tot = (self.p_max[live] @ self.gains[live])[s] - self.p_max[users] * self.gains[users, s]
        if not self.config.intra_cell_interference:
            own = self.active
            intra = np.bincount(self.serving[own], weights=self.p_max[own] * self.gains[own, self.serving[own]],
                                minlength=self.n_bs)
            tot = tot - (intra[s] - self.p_max[users] * self.gains[users, s])
        return np.maximum(tot, 0.0)

    def interference_for_served(self, users: np.ndarray) -> np.ndarray:
        s = self.serving[users]
        tot = self.rx_totals()[s] - self.power[users] * self.gains[users, s]
        if not self.config.intra_cell_interference:
            tot = tot - (self.intra_totals()[s] - self.power[users] * self.gains[users, s])
        return np.maximum(tot, 0.0)

    def coupling_matrix(self, users: np.ndarray) -> np.ndarray:
        s = self.serving[users]
        c = self.gains[np.ix_(users, s)].T.copy()
        np.fill_diagonal(c, 0.0)
        if not self.config.intra_cell_interference:
            c[s[:, None] == s[None, :]] = 0.0
        return c

    def quantize_up(self, bw):
        q = self.config.bandwidth_quantum
        if q is None:
            return bw
        return np.ceil(np.asarray(bw) / q) * q

    def assign(self, user: int, bs_id: int, bandwidth: float, power: float):
        if self.arrival[user] < 0:
            self.arrival[user] = self._n_arrived
            self._n_arrived += 1
        self.serving[user] = bs_id
        self.bandwidth[user] = bandwidth
        self.power[user] = power
        self.blocked[user] = False
        self._refresh_residual()

    def block(self, user: int):
        if self.arrival[user] < 0:
            self.arrival[user] = self._n_arrived
            self._n_arrived += 1
        self.serving[user] = -1
        self.bandwidth[user] = 0.0
        self.power[user] = 0.0
        self.blocked[user] = True
        self._refresh_residual()

    # -- read-outs -----------------------------------------------------------

    def sinr(self) -> np.ndarray:
        """Achieved SINR of every user at the current powers (0 for unserved)."""
        out = np.zeros(self.n_users)
        users = np.flatnonzero(self.active)
        if len(users) == 0:
            return out
        s = self.serving[users]
        ni = lm.noise_plus_interference(self.bandwidth[users], self.noise_psd[s],
                                        self.interference_for_served(users), self.spread_for(s))
        out[users] = self.power[users] * self.gains[users, s] / ni
        return out

    def reference_powers(self) -> np.ndarray:
        """Power each served user would need at its bandwidth if every other
        non-blocked user sent at full power (capped at the UE maximum)."""
        out = np.zeros(self.n_users)
        users = np.flatnonzero(self.active)
        if len(users) == 0:
            return out
        s = self.serving[users]
        j = self._full_power_interference(users)
        ni =lm.noise_plus_interference(self.bandwidth[users], self.noise_psd[s], j, self.spread_for(s))
        p = np.expm1(np.log(2.0) * self.demand[users] / self.bandwidth[users]) * ni / self.gains[users, s]
        out[users] = np.minimum(p, self.p_max[users])
        return out

    def associations(self) -> dict[int, Association]:
        g = self.sinr()
        out = {}
        for u in range(self.n_users):
            if self.serving[u] >= 0:
                out[u] = Association(u, int(self.serving[u]), float(self.bandwidth[u]),
                                     float(self.power[u]), float(g[u]))
            elif self.blocked[u]:
                out[u] = Association(u, None, 0.0, 0.0, 0.0)
        return out

    def check_invariants(self, tol: float = 1e-6):
        alloc = self.allocated()
        if np.any(alloc > self.total_bandwidth):
            raise ConsistencyError("bandwidth budget exceeded")
        if not np.allclose(self.residual, self.total_bandwidth - alloc, rtol=0, atol=tol):
            raise ConsistencyError("residual cache out of sync")
        act = self.active
        if np.any(self.power[act] > self.p_max[act] * (1 + 1e-12)):
            raise ConsistencyError("power above maximum")


# -- per-candidate quantities -------------------------------------------------

@dataclass
class _Candidates:
    eta: np.ndarray           # minimum bandwidth per BS (inf if infeasible)
    interference: np.ndarray  # current interference, for provisional powers
    upper: np.ndarray         # largest admissible bandwidth per BS


def _candidates_for(state: NetworkState, user: int) -> _Candidates:
    interference = state.interference_for_new(user)
    upper = np.minimum(state.cap[user], state.total_bandwidth)
    rx = state.p_max[user] * state.gains[user]
    eta = lm.min_bandwidth_at_power(state.demand[user], rx, state.noise_psd, state.sizing_interference(user),
                                    state.spread, upper)
    eta = state.quantize_up(eta)
    eta = np.where(eta <= upper, eta, np.inf)
    return _Candidates(eta=eta, interference=interference, upper=upper)


def _power_at(state: NetworkState, users, bs_ids, bandwidth, interference):
    ni = lm.noise_plus_interference(bandwidth, state.noise_psd[bs_ids], interference, state.spread_for(bs_ids))
    return np.expm1(np.log(2.0) * state.demand[users] / bandwidth) * ni / state.gains[users, bs_ids]


def _sinr_at(state, user, bs_id, bandwidth, power, interference):
    ni = lm.noise_plus_interference(bandwidth, state.noise_psd[bs_id], interference, state.spread_for(bs_id))
    return power * state.gains[user, bs_id] / ni


def interferer_set(user: int, serving_bs: int, state: NetworkState) -> list[Interferer]:
    """All other transmitting users with their powers and gains toward ``serving_bs``."""
    out = []
    for i in np.flatnonzero(state.active):
        if i == user:
            continue
        if not state.config.intra_cell_interference and state.serving[i] == serving_bs:
            continue
        out.append(Interferer(int(i), float(state.power[i]), float(state.gains[i, serving_bs])))
    return out


# -- baselines -----------------------------------------------------------------

def _rsrp_associate(user: int, state: NetworkState, offset: np.ndarray) -> Association:
    cand = _candidates_for(state, user)
    feasible = np.isfinite(cand.eta) & (cand.eta <= state.free())
    if not feasible.any():
        state.block(user)
        return Association(user, None, 0.0, 0.0, 0.0)
    metric = np.where(feasible, state.rsrp[user] + offset, -np.inf)
    b = int(np.argmax(metric))
    bw = float(cand.eta[b])
    p = float(state.p_max[user])
    state.assign(user, b, bw, p)
    return Association(user, b, bw, p, float(_sinr_at(state, user, b, bw, p, cand.interference[b])))


def max_rsrp_associate(user: int, state: NetworkState, config: AlgorithmConfig | None = None) -> Association:
    return _rsrp_associate(user, state, np.zeros(state.n_bs))


def cio_associate(user: int, state: NetworkState, config: AlgorithmConfig | None = None) -> Association:
    return _rsrp_associate(user, state, state.cio)


# -- distributive ---------------------------------------------------------------

def distributive_bandwidth(eta_user: float, residual: float) -> float:
    """Twice the minimum when the BS has more than that left, else the minimum."""
    return 2.0 * eta_user if residual > 2.0 * eta_user else eta_user


def distributive_associate(user: int, state: NetworkState, config: AlgorithmConfig | None = None) -> Association:
    config = config or state.config
    cand = _candidates_for(state, user)
    eta = cand.eta
    free = state.free()
    feasible = np.isfinite(eta) & (eta < state.total_bandwidth) & (eta <= free)
    if not feasible.any():
        state.block(user)
        return Association(user, None, 0.0, 0.0, 0.0)
    b_ids = np.flatnonzero(feasible)
    e = eta[b_ids]
    room = np.minimum(free[b_ids], cand.upper[b_ids])
    if config.bandwidth_quantum is None:
        bw = np.array([distributive_bandwidth(x, r) for x, r in zip(e, state.residual[b_ids])])
        bw = np.maximum(np.minimum(bw, room), e)
    else:
        doubled = state.quantize_up(2.0 * e)
        bw = np.where(doubled <= room, doubled, e)
    score = lm.association_score(state.demand[user], bw, state.gains[user, b_ids], config.association_exponent)
    k = int(np.argmin(score))
    b = int(b_ids[k])
    p = min(float(_power_at(state, user, b, bw[k], cand.interference[b])), float(state.p_max[user]))
    state.assign(user, b, float(bw[k]), p)
    return Association(user, b, float(bw[k]), p, float(_sinr_at(state, user, b, bw[k], p, cand.interference[b])))


# -- semi-distributive ----------------------------------------------------------

def _proportional_fill(current, lo, hi, target, iterations=60):
    """Scale ``current`` by a common factor, clipped to ``[lo, hi]``, to fill ``target``.

    Vectorised over leading axes of ``target`` (shape ``(K,)``); the user axis
    is last. The returned allocation never exceeds ``target``.
    """
    target = np.asarray(target, float)
    full = np.broadcast_to(hi, target.shape + hi.shape)
    enough = hi.sum() <= target
    s_lo = np.zeros_like(target)
    s_hi = np.full_like(target, np.max(hi / current))
    for _ in range(iterations):
        mid = 0.5 * (s_lo + s_hi)
        tot = np.clip(mid[:, None] * current, lo, hi).sum(axis=-1)
        ok = tot <= target
        s_lo = np.where(ok, mid, s_lo)
        s_hi = np.where(ok, s_hi, mid)
    alloc = np.clip(s_lo[:, None] * current, lo, hi)
    return np.where(enough[:, None], full, alloc)


def _semi_candidate_multiplier(state: NetworkState, user: int, b: int, eta_u: float, upper_u: float,
                               interference_b: float, config: AlgorithmConfig):
    """Grid search over the newcomer's multiplier at BS ``b``.

    Returns ``(bw_user, {existing_user: bw})`` or ``None`` if infeasible.
    """
    existing = state.users_on(b)
    budget = state.budget[b]
    up_e = np.minimum(state.cap[existing], state.total_bandwidth[b])
    x_hi = min(upper_u, budget) / eta_u
    if len(existing):
        # fast path: everybody fits at their cap, so the largest multiplier wins
        n_steps = int(math.floor((x_hi - 1.0) / config.search_step + 1e-9))
        if n_steps >= 0 and up_e.sum() + (1.0 + n_steps * config.search_step) * eta_u <= budget:
            return (1.0 + n_steps * config.search_step) * eta_u, dict(zip(existing.tolist(), up_e.tolist()))
        i_e = state.interference_for_served(existing)
        rx = state.p_max[existing] * state.gains[existing, b]
        eta_e = lm.min_bandwidth_at_power(state.demand[existing], rx, state.noise_psd[b],
                                          state.sizing_interference_served(existing), state.spread_for(b), up_e)
        lo_e = np.where(np.isfinite(eta_e), np.maximum(eta_e, 0.0), state.bandwidth[existing])
        lo_e = np.minimum(lo_e, up_e)
        x_hi = min(x_hi, (budget - lo_e.sum()) / eta_u)
    if x_hi < 1.0:
        return None
    n_steps = int(math.floor((x_hi - 1.0) / config.search_step + 1e-9))
    xs = 1.0 + config.search_step * np.arange(n_steps + 1)
    bw_u = xs * eta_u
    if not len(existing):
        return float(bw_u[-1]), {}
    alloc = _proportional_fill(state.bandwidth[existing], lo_e, up_e, budget - bw_u)
    p_u = _power_at(state, user, b, bw_u, interference_b)
    p_e = _power_at(state, existing[None, :], np.full(len(existing), b)[None, :], alloc, i_e[None, :])
    mean = (p_u + p_e.sum(axis=-1)) / (len(existing) + 1)
    k = int(np.argmin(mean))
    return float(bw_u[k]), dict(zip(existing.tolist(), alloc[k].tolist()))


def _enumerate_quanta(n_users, n_quanta, lo=None, hi=None):
    """All integer allocations (k_1..k_n) with k_i >= lo_i, k_i <= hi_i and sum <= n_quanta,
    in lexicographic order."""
    lo = [1] * n_users if lo is None else lo
    hi = [n_quanta] * n_users if hi is None else hi
    ranges = [range(int(a), int(b) + 1) for a, b in zip(lo, hi)]
    rows = [k for k in itertools.product(*ranges) if sum(k) <= n_quanta]
    return np.array(rows, dtype=float).reshape(-1, n_users)


def joint_quantized_allocation(state: NetworkState, users: np.ndarray, b: int, external: np.ndarray):
    """Exhaustive search over quantised splits of BS ``b`` among ``users``.

    Returns ``(bandwidths, mean_power)`` of the best split or ``None``. Powers
    are evaluated by the joint fixed point among ``users`` with ``external``
    interference from everyone else held fixed.
    """
    cfg = state.config
    q = cfg.bandwidth_quantum
    n_q = int(round(state.total_bandwidth[b] / q))
    hi = np.floor(np.minimum(state.cap[users], state.total_bandwidth[b]) / q + 1e-9).astype(int)
    if np.any(hi < 1):
        return None
    n_rows = math.prod(int(h) for h in hi)
    if n_rows > _MAX_JOINT_ALLOCATIONS:
        raise ValueError(f"joint allocation search too large ({n_rows} points)")
    k = _enumerate_quanta(len(users), n_q, hi=hi)
    if len(k) == 0:
        return None
    bw = k * q
    coupling = state.gains[np.ix_(users, np.full(len(users), b))].T.copy()
    np.fill_diagonal(coupling, 0.0)
    if not cfg.intra_cell_interference:
        coupling[:] = 0.0
    res = evaluate_allocations(state, users, np.full(len(users), b), bw, coupling, external)
    total = np.where(res.feasible, res.powers.sum(axis=-1), np.inf)
    i = int(np.argmin(total))
    if not np.isfinite(total[i]):
        return None
    return bw[i], float(total[i] / len(users))


@dataclass
class BatchEvaluation:
    powers: np.ndarray
    feasible: np.ndarray


def evaluate_allocations(state_or_arrays, users, bs_ids, bandwidth, coupling, external=None) -> BatchEvaluation:
    """Fixed-point powers for a batch of bandwidth splits.

    ``bandwidth`` is ``(B, n)``; ``coupling`` is ``(n, n)``. A split is
    feasible when nobody hits the power cap and no bandwidth exceeds the
    SINR-floor cap.
    """
    st = state_or_arrays
    cfg = st.config
    demand = st.demand[users]
    gain = st.gains[users, bs_ids]
    spread = None if st.spread is None else st.spread[bs_ids]
    n0 = st.noise_psd[bs_ids]
    bw = np.asarray(bandwidth, float)
    if external is not None and np.any(external):
        # fold fixed outside interference into an equivalent per-user noise term
        noise_eff = n0 + lm.overlap_weight(bw, spread) * external / bw
    else:
        noise_eff = np.broadcast_to(n0, bw.shape)
    res = lm.fixed_point_powers(demand, bw, gain, coupling, noise_eff, st.p_max[users],
                                spread_over=spread, tol_db=cfg.power_tolerance_db,
                                max_iter=cfg.max_power_iterations)
    feasible = ~res.clamped.any(axis=-1) & np.all(bw <= st.cap[users] * (1 + 1e-12), axis=-1)
    return BatchEvaluation(powers=res.powers, feasible=feasible)


def semi_distributive_associate(user: int, state: NetworkState, config: AlgorithmConfig | None = None) -> Association:
    config = config or state.config
    cand = _candidates_for(state, user)
    if config.bandwidth_quantum is None:
        feasible = np.isfinite(cand.eta) & (cand.eta <= state.total_bandwidth)
    else:
        # the joint search is exact, so it alone decides feasibility
        feasible = cand.upper >= config.bandwidth_quantum
    if not feasible.any():
        state.block(user)
        return Association(user, None, 0.0, 0.0, 0.0)
    offers = {}
    for b in np.flatnonzero(feasible):
        b = int(b)
        if config.bandwidth_quantum is None:
            offer = _semi_candidate_multiplier(state, user, b, float(cand.eta[b]), float(cand.upper[b]),
                                               float(cand.interference[b]), config)
        else:
            offer = _semi_candidate_quantized(state, user, b, cand)
        if offer is not None:
            offers[b] = offer
    if not offers:
        state.block(user)
        return Association(user, None, 0.0, 0.0, 0.0)
    b_ids = np.array(sorted(offers))
    bw = np.array([offers[b][0] for b in b_ids])
    score = lm.association_score(state.demand[user], bw, state.gains[user, b_ids], config.association_exponent)
    k = int(np.argmin(score))
    b = int(b_ids[k])
    bw_u, others = offers[b]
    interference = cand.interference[b]
    # commit the rebalanced split and re-solve the affected users' powers
    for j, bw_j in others.items():
        state.bandwidth[j] = bw_j
    p_u = min(float(_power_at(state, user, b, bw_u, interference)), float(state.p_max[user]))
    state.assign(user, b, bw_u, p_u)
    if others:
        ids = np.array(sorted(others))
        i_e = state.interference_for_served(ids)
        p = _power_at(state, ids, np.full(len(ids), b), state.bandwidth[ids], i_e)
        state.power[ids] = np.minimum(p, state.p_max[ids])
    return Association(user, b, bw_u, p_u, float(_sinr_at(state, user, b, bw_u, p_u, interference)))


def _semi_candidate_quantized(state: NetworkState, user: int, b: int, cand: _Candidates):
    existing = state.users_on(b)
    users = np.sort(np.append(existing, user))
    # users on other BSs act as fixed outside interference
    other = state.active & (state.serving != b)
    external = float(state.power[other] @ state.gains[other, b]) if other.any() else 0.0
    best = joint_quantized_allocation(state, users, b, np.full(len(users), external))
    if best is None:
        return None
    bw, _ = best
    split = dict(zip(users.tolist(), bw.tolist()))
    bw_u = split.pop(user)
    return bw_u, split


# -- power fixed point and finalisation ------------------------------------------

def solve_power_fixed_point(state: NetworkState, config: AlgorithmConfig | None = None) -> lm.FixedPointResult | None:
    """Re-solve all served users' powers jointly; updates ``state.power`` in place."""
    config = config or state.config
    users = np.flatnonzero(state.active)
    if len(users) == 0:
        return None
    s = state.serving[users]
    res = lm.fixed_point_powers(state.demand[users], state.bandwidth[users], state.gains[users, s],
                                state.coupling_matrix(users), state.noise_psd[s], state.p_max[users],
                                spread_over=state.spread_for(s), tol_db=config.power_tolerance_db,
                                max_iter=config.max_power_iterations)
    state.power[users] = res.powers
    state.converged = bool(np.all(res.converged))
    state.power_sweeps = res.sweeps
    if not state.converged:
        log.warning("power fixed point did not converge in %d sweeps", res.sweeps)
    clamped = np.zeros(state.n_users, bool)
    clamped[users] = res.clamped
    res.clamped_users = np.flatnonzero(clamped)
    return res


def _finalize(state: NetworkState, policy: str, max_rounds: int = 25):
    """Bring the pass to a consistent end state.

    Baselines re-derive each user's minimum bandwidth against the final
    interference at full power. Proposed schemes solve the power fixed point;
    users stuck at the power cap first try to widen their allocation, else
    they are blocked.
    """
    pinned = policy in BASELINES
    for rnd in range(max_rounds + 1):
        users = np.flatnonzero(state.active)
        if len(users) == 0:
            return
        if pinned:
            # powers are pinned, so bandwidths do not feed back into interference
            state.power[users] = state.p_max[users]
            s = state.serving[users]
            upper = np.minimum(state.cap[users], state.total_bandwidth[s])
            eta = lm.min_bandwidth_at_power(state.demand[users], state.p_max[users] * state.gains[users, s],
                                            state.noise_psd[s], state.interference_for_served(users),
                                            state.spread_for(s), upper)
            eta = np.where(eta <= upper, state.quantize_up(eta), np.inf)
            order = np.argsort(state.arrival[users])
            shrink = eta <= state.bandwidth[users]
            state.bandwidth[users[shrink]] = eta[shrink]
            state._refresh_residual()
            blocked_any = False
            for k in order:
                u, e = users[k], eta[k]
                if shrink[k]:
                    continue
                if np.isfinite(e) and e <= upper[k] and e - state.bandwidth[u] <= state.free()[state.serving[u]]:
                    state.bandwidth[u] = e
                    state._refresh_residual()
                else:
                    state.block(u)
                    blocked_any = True
            if not blocked_any:
                return
        else:
            res = solve_power_fixed_point(state)
            stuck = res.clamped_users
            if len(stuck) == 0:
                return
            if rnd == max_rounds:
                for u in stuck:
                    state.block(u)
                continue
            for u in stuck[np.argsort(state.arrival[stuck])]:
                b = state.serving[u]
                i_u = state.interference_for_served(np.array([u]))[0]
                upper = min(state.cap[u], state.total_bandwidth[b])
                e = lm.min_bandwidth_at_power(state.demand[u], state.p_max[u] * state.gains[u, b],
                                              state.noise_psd[b], i_u, state.spread_for(b), upper)
                e = float(state.quantize_up(e))
                room = state.free()[b] + state.bandwidth[u]
                if np.isfinite(e) and e <= upper and e <= room and e > state.bandwidth[u]:
                    state.bandwidth[u] = e
                    state.power[u] = state.p_max[u]
                    state._refresh_residual()
                else:
                    state.block(u)
    # one more pass guarantees the reported state is self-consistent
    if not pinned:
        res = solve_power_fixed_point(state)
        for u in res.clamped_users:
            state.block(u)
        if len(res.clamped_users):
            solve_power_fixed_point(state)


_OPS = {
    "max_rsrp": max_rsrp_associate,
    "cio": cio_associate,
    "semi_distributive": semi_distributive_associate,
    "distributive": distributive_associate,
}


def run_association_pass(policy: str, state: NetworkState, arrival_order, config: AlgorithmConfig | None = None,
                         check: bool = False) -> NetworkState:
    """Associate users one by one in ``arrival_order``, then settle powers."""
    if policy not in _OPS:
        raise ValueError(f"unknown policy {policy!r}; choose from {', '.join(POLICIES)}")
    config = config or state.config
    op = _OPS[policy]
    for u in arrival_order:
        op(int(u), state, config)
        if check:
            state.check_invariants()
    _finalize(state, policy)
    if check:
        state.check_invariants()
    return state
