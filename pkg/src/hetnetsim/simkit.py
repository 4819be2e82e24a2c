"""Monte Carlo orchestration: drops, paired policy comparison, KPI aggregation."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import assoc
from .channel import ShadowTable, gain_matrix, watt2dbm
from .config import SimConfig
from .netmodel import PlacementError, Topology, TopologyError, build_hex_grid, place_small_cells, place_users

log = logging.getLogger(__name__)

THREADS_ENV = "HETNETSIM_THREADS"
SE_DEFINITION = "sum of served demand / sum of allocated bandwidth, per drop, averaged over drops (bit/s/Hz)"
POWER_DEFINITION = "arithmetic mean of per-user dBm over served users of all drops"

# independent RNG streams per drop
_STREAM_TOPOLOGY, _STREAM_SHADOW, _STREAM_ORDER = 0, 1, 2


class AggregationError(RuntimeError):
    """No usable drop to aggregate."""


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


def build_topology(config: SimConfig, seed: int) -> Topology:
    t = config.topology
    rng = _rng(seed, _STREAM_TOPOLOGY)
    topo = build_hex_grid(t.isd, t.macro_sites, t.sectors_per_site, bandwidth=t.total_bandwidth,
                          height=t.macro_height, dl_tx_power=t.macro_dl_tx_power,
                          antenna_gain_peak=t.macro_antenna_gain, noise_figure=t.bs_noise_figure)
    topo = place_small_cells(topo, t.small_per_sector, rng,
                             min_separation=t.small_min_separation_macro,
                             min_small_separation=t.small_min_separation_small,
                             max_retries=t.placement_retries, height=t.small_height,
                             bandwidth=t.total_bandwidth, dl_tx_power=t.small_dl_tx_power,
                             antenna_gain_peak=t.small_antenna_gain, noise_figure=t.bs_noise_figure,
                             cio_offset=config.algorithm.cio_offset_db)
    return place_users(topo, t.users_per_sector, rng, hotspot_fraction=t.hotspot_fraction,
                       hotspot_radius=t.hotspot_radius, indoor_ratio=t.indoor_ratio,
                       max_capacity=t.max_capacity, max_tx_power=t.ue_max_tx_power,
                       height=t.ue_height, antenna_gain=t.ue_antenna_gain)


@dataclass
class DropResult:
    seed: int
    policy: str
    tier: list                       # "macro" / "small" / None per user
    bs_id: np.ndarray                # -1 when blocked
    tx_power_dbm: np.ndarray         # nan when blocked
    reference_tx_power_dbm: np.ndarray
    sinr_db: np.ndarray
    bandwidth: np.ndarray
    demand: np.ndarray
    blocked: np.ndarray
    load: np.ndarray                 # users per BS
    bs_is_macro: np.ndarray
    converged: bool = True
    power_sweeps: int = 0
    error: str | None = None

    @property
    def n_users(self) -> int:
        return len(self.blocked)

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def served(self) -> np.ndarray:
        return ~self.blocked

    def mean_tx_power_dbm(self) -> float:
        p = self.tx_power_dbm[self.served]
        return float(np.mean(p)) if len(p) else math.nan

    def spectrum_efficiency(self) -> float:
        s = self.served
        bw = float(np.sum(self.bandwidth[s]))
        return float(np.sum(self.demand[s]) / bw) if bw > 0 else math.nan

    def mean_load(self, macro: bool) -> float | None:
        sel = self.bs_is_macro if macro else ~self.bs_is_macro
        return float(np.mean(self.load[sel])) if np.any(sel) else None

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def _failed_drop(seed: int, policy: str, error: str) -> DropResult:
    e = np.zeros(0)
    return DropResult(seed, policy, [], e.astype(int), e, e, e, e, e, e.astype(bool), e.astype(int),
                      e.astype(bool), converged=False, error=error)


def _collect(state: assoc.NetworkState, policy: str, seed: int) -> DropResult:
    act = state.active
    with np.errstate(divide="ignore"):
        power = np.where(act, watt2dbm(np.where(act, state.power, 1.0)), np.nan)
        ref = np.where(act, watt2dbm(np.where(act, state.reference_powers(), 1.0)), np.nan)
        sinr = np.where(act, 10.0 * np.log10(np.where(act, state.sinr(), 1.0)), np.nan)
    tier = [None if b < 0 else ("macro" if state.is_macro[b] else "small") for b in state.serving]
    return DropResult(seed=seed, policy=policy, tier=tier, bs_id=state.serving.copy(),
                      tx_power_dbm=power, reference_tx_power_dbm=ref, sinr_db=sinr,
                      bandwidth=state.bandwidth.copy(), demand=state.demand.copy(), blocked=~act,
                      load=np.bincount(state.serving[act], minlength=state.n_bs),
                      bs_is_macro=state.is_macro.copy(), converged=state.converged,
                      power_sweeps=state.power_sweeps)


def _run_seed(config: SimConfig, policies, seed: int, check: bool = False) -> dict[str, DropResult]:
    """All policies on one drop, sharing topology, shadowing and arrival order."""
    try:
        topo = build_topology(config, seed)
    except (PlacementError, TopologyError) as exc:
        log.warning("drop %d: %s", seed, exc)
        return {p: _failed_drop(seed, p, f"placement: {exc}") for p in policies}
    params = config.channel_params()
    shadow = ShadowTable.draw(topo, params, _rng(seed, _STREAM_SHADOW))
    gains = gain_matrix(topo, params, shadow)
    order = _rng(seed, _STREAM_ORDER).permutation(len(topo.users))
    algo = config.algorithm_config()
    out = {}
    for policy in policies:
        state = assoc.NetworkState(topo, gains, algo, shadow, params.thermal_noise_density)
        assoc.run_association_pass(policy, state, order, check=check)
        out[policy] = _collect(state, policy, seed)
        if not state.converged:
            log.warning("drop %d, %s: power fixed point did not converge", seed, policy)
    return out


def run_drop(config: SimConfig, policy: str, seed: int, check: bool = False) -> DropResult:
    if policy not in assoc.POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    return _run_seed(config, [policy], seed, check)[policy]


# -- aggregation --------------------------------------------------------------

@dataclass
class Cdf:
    x: list[float]
    p: list[float]

    @classmethod
    def from_samples(cls, values, resolution: float = 0.1) -> "Cdf":
        v = np.sort(np.asarray(values, float)[np.isfinite(values)])
        if len(v) == 0:
            return cls([], [])
        lo = math.floor(round(v[0] / resolution, 9))
        hi = math.ceil(round(v[-1] / resolution, 9))
        x = np.arange(lo, hi + 1) * resolution
        x = np.round(x, 10)
        p = np.searchsorted(v, x + 1e-9 * resolution, side="right") / len(v)
        return cls(x.tolist(), p.tolist())

    def median(self) -> float:
        i = int(np.searchsorted(self.p, 0.5))
        return self.x[min(i, len(self.x) - 1)] if self.x else math.nan


@dataclass
class PolicyKpi:
    policy: str
    mean_tx_power_dbm: float
    tx_power_stderr_db: float
    per_drop_mean_tx_power_dbm: list[float]
    mean_reference_tx_power_dbm: float
    median_sinr_db: float
    tx_power_cdf: Cdf
    sinr_cdf: Cdf
    mean_users_per_macro_bs: float | None
    mean_users_per_small_bs: float | None
    spectrum_efficiency: float
    per_drop_spectrum_efficiency: list[float]
    blocking_rate: float
    users: int
    served_users: int
    nonconverged_drops: int
    failed_drops: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class KpiReport:
    policies: dict[str, PolicyKpi]
    config: dict
    config_hash: str
    n_drops: int
    base_seed: int
    seeds: list[int]
    definitions: dict = field(default_factory=lambda: {"spectrum_efficiency": SE_DEFINITION,
                                                      "mean_tx_power_dbm": POWER_DEFINITION})

    def __getitem__(self, policy: str) -> PolicyKpi:
        return self.policies[policy]

    def metadata(self) -> dict:
        return {"config": self.config, "config_hash": self.config_hash, "n_drops": self.n_drops,
                "base_seed": self.base_seed, "seeds": self.seeds, "definitions": self.definitions}

    def to_dict(self) -> dict:
        return {"metadata": self.metadata(), "policies": {k: v.to_dict() for k, v in self.policies.items()}}

    def policy_dict(self, policy: str) -> dict:
        return {"metadata": self.metadata(), "policy": policy, "kpi": self.policies[policy].to_dict()}

    def to_json(self, **kw) -> str:
        return json.dumps(_clean(self.to_dict()), **kw)

    def cdf_rows(self, policies=None):
        for name in policies or self.policies:
            k = self.policies[name]
            for metric, cdf in (("tx_power_dbm", k.tx_power_cdf), ("sinr_db", k.sinr_cdf)):
                for x, p in zip(cdf.x, cdf.p):
                    yield name, metric, x, p

    def cdf_csv(self, policies=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "metric", "x_value", "cumulative_probability"])
        for name, metric, x, p in self.cdf_rows(policies):
            w.writerow([name, metric, f"{x:.6g}", f"{p:.6g}"])
        return buf.getvalue()


def _clean(obj):
    """JSON-safe copy: NaN/inf become null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _stderr(values) -> float:
    v = np.asarray([x for x in values if math.isfinite(x)])
    return float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.nan


def _mean_or_none(values):
    v = [x for x in values if x is not None]
    return float(np.mean(v)) if v else None


def aggregate(drops: list[DropResult], policy: str, resolution: float = 0.1) -> PolicyKpi:
    ok = sorted((d for d in drops if not d.failed), key=lambda d: d.seed)
    if not ok:
        raise AggregationError(f"every drop failed for {policy}")
    power = np.concatenate([d.tx_power_dbm[d.served] for d in ok])
    ref = np.concatenate([d.reference_tx_power_dbm[d.served] for d in ok])
    sinr = np.concatenate([d.sinr_db[d.served] for d in ok])
    per_drop_p = [d.mean_tx_power_dbm() for d in ok]
    per_drop_se = [d.spectrum_efficiency() for d in ok]
    users = sum(d.n_users for d in ok)
    blocked = sum(int(d.blocked.sum()) for d in ok)
    sinr_cdf = Cdf.from_samples(sinr, resolution)
    se = [x for x in per_drop_se if math.isfinite(x)]
    return PolicyKpi(
        policy=policy,
        mean_tx_power_dbm=float(np.mean(power)) if len(power) else math.nan,
        tx_power_stderr_db=_stderr(per_drop_p),
        per_drop_mean_tx_power_dbm=per_drop_p,
        mean_reference_tx_power_dbm=float(np.mean(ref)) if len(ref) else math.nan,
        median_sinr_db=float(np.median(sinr)) if len(sinr) else math.nan,
        tx_power_cdf=Cdf.from_samples(power, resolution),
        sinr_cdf=sinr_cdf,
        mean_users_per_macro_bs=_mean_or_none([d.mean_load(True) for d in ok]),
        mean_users_per_small_bs=_mean_or_none([d.mean_load(False) for d in ok]),
        spectrum_efficiency=float(np.mean(se)) if se else math.nan,
        per_drop_spectrum_efficiency=per_drop_se,
        blocking_rate=blocked / users if users else 0.0,
        users=users,
        served_users=users - blocked,
        nonconverged_drops=sum(not d.converged for d in ok),
        failed_drops=len(drops) - len(ok),
    )


def worker_count(n_tasks: int) -> int:
    """Pool size: CPU count, capped by the environment variable and the task count."""
    n = os.cpu_count() or 1
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if cap < 1:
            raise ValueError(f"{THREADS_ENV} must be at least 1")
        n = min(n, cap)
    return max(1, min(n, n_tasks))


def run_drops(config: SimConfig, policies, seeds, workers: int | None = None,
              check: bool = False) -> dict[str, list[DropResult]]:
    seeds = list(seeds)
    workers = worker_count(len(seeds)) if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_seed, [config] * len(seeds), [list(policies)] * len(seeds),
                                    seeds, [check] * len(seeds)))
    else:
        results = [_run_seed(config, list(policies), s, check) for s in seeds]
    by_seed = sorted(zip(seeds, results), key=lambda t: t[0])
    return {p: [r[p] for _, r in by_seed] for p in policies}


def run_monte_carlo(config: SimConfig, policies=None, n_drops: int | None = None, base_seed: int | None = None,
                    workers: int | None = None, check: bool = False) -> KpiReport:
    policies = list(policies or config.simulation.policies)
    n_drops = config.simulation.drops if n_drops is None else n_drops
    base_seed = config.simulation.seed if base_seed is None else base_seed
    if n_drops < 1:
        raise ValueError("n_drops must be at least 1")
    unknown = [p for p in policies if p not in assoc.POLICIES]
    if unknown:
        raise ValueError(f"unknown policies: {', '.join(unknown)}")
    # the report embeds the config actually run
    config = config.with_overrides(**{"simulation.drops": n_drops, "simulation.seed": base_seed,
                                      "simulation.policies": policies})
    seeds = [base_seed + i for i in range(n_drops)]
    return build_report(config, run_drops(config, policies, seeds, workers, check))


def build_report(config: SimConfig, drops: dict[str, list[DropResult]]) -> KpiReport:
    """Aggregate per-policy drop results (as returned by :func:`run_drops`)."""
    kpis = {p: aggregate(d, p, config.output.cdf_resolution_db) for p, d in drops.items()}
    seeds = sorted({d.seed for runs in drops.values() for d in runs})
    return KpiReport(policies=kpis, config=config.resolved(), config_hash=config.digest(),
                     n_drops=len(seeds), base_seed=seeds[0], seeds=seeds)


def sensitivity_sweep(config: SimConfig, sweep, policies=None, n_drops: int | None = None,
                      base_seed: int | None = None, workers: int | None = None) -> list[KpiReport]:
    """One report per small-cell density; all densities share the base seed."""
    sweep = list(sweep)
    if not sweep:
        raise ValueError("sweep must not be empty")
    return [run_monte_carlo(config.with_overrides(**{"topology.small_per_sector": int(d)}),
                            policies, n_drops, base_seed, workers) for d in sweep]


def write_report(report: KpiReport, out_dir: str | Path) -> list[Path]:
    """Emit kpi.json/cdf.csv plus per-policy kpi_<policy>.json and cdf_<policy>.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        path = out / name
        path.write_text(text)
        written.append(path)

    put("kpi.json", report.to_json(indent=2) + "\n")
    put("cdf.csv", report.cdf_csv())
    for p in report.policies:
        put(f"kpi_{p}.json", json.dumps(_clean(report.policy_dict(p)), indent=2) + "\n")
        put(f"cdf_{p}.csv", report.cdf_csv([p]))
    return written
