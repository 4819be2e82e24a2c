"""Stateless link mathematics: minimum bandwidth, residual bandwidth, uplink
SINR, Shannon capacity, required transmit power and the association score.

Everything here works in the linear domain. Functions accept scalars or numpy
arrays unless noted otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import lambertw


class InfeasibleError(ValueError):
    """No finite bandwidth meets the demand."""


class OverBudgetError(ValueError):
    """Required transmit power exceeds the UE's maximum."""


class ConsistencyError(RuntimeError):
    """Bookkeeping produced an impossible state (e.g. negative residual)."""


@dataclass(frozen=True)
class AlgorithmConfig:
    association_exponent: float = 0.5
    sinr_floor_db: float | None = 0.0
    search_step: float = 0.05
    power_tolerance_db: float = 0.01
    max_power_iterations: int = 100
    cio_offset_db: float = 6.0
    intra_cell_interference: bool = True
    interference_model: str = "spectral_overlap"
    bandwidth_quantum: float | None = None
    sizing_interference: str = "max_power"

    def __post_init__(self):
        if not 0.0 <= self.association_exponent <= 1.0:
            raise ValueError("association_exponent must lie in [0, 1]")
        if self.search_step <= 0:
            raise ValueError("search_step must be positive")
        if self.interference_model not in ("spectral_overlap", "full"):
            raise ValueError(f"unknown interference_model {self.interference_model!r}")
        if self.sizing_interference not in ("max_power", "current"):
            raise ValueError(f"unknown sizing_interference {self.sizing_interference!r}")
        if self.bandwidth_quantum is not None and self.bandwidth_quantum <= 0:
            raise ValueError("bandwidth_quantum must be positive")

    @property
    def sinr_floor(self) -> float:
        """Linear SINR floor (0 when disabled)."""
        if self.sinr_floor_db is None:
            return 0.0
        return 10.0 ** (self.sinr_floor_db / 10.0)

    def bandwidth_cap(self, demand):
        """Largest bandwidth that keeps the SINR at or above the floor."""
        floor = self.sinr_floor
        if floor <= 0:
            return np.full_like(np.asarray(demand, dtype=float), np.inf)
        return np.asarray(demand, dtype=float) / math.log2(1.0 + floor)


_LN2 = math.log(2.0)


def capacity(bandwidth, sinr):
    return bandwidth * np.log1p(sinr) / _LN2


def min_bandwidth(demand: float, sinr: float) -> float:
    """Bandwidth needed to carry ``demand`` bit/s at a given SINR."""
    if not math.isfinite(sinr) or sinr <= 0:
        raise InfeasibleError(f"SINR {sinr!r} cannot carry traffic")
    return demand * _LN2 / math.log1p(sinr)


def residual_bandwidth(total: float, allocations, tol: float = 1e-6) -> float:
    eta = total - float(np.sum(allocations))
    if eta < -tol:
        raise ConsistencyError(f"over-allocated by {-eta:.6g} Hz")
    return max(eta, 0.0)


def uplink_sinr(signal_power, gain, interferer_powers, interferer_gains, noise, overlap=1.0):
    """SINR of one link given the transmitting interferers seen by its receiver.

    ``overlap`` scales the aggregate interference (1 = every interferer lands
    in full on the victim's band).
    """
    i = float(np.sum(np.asarray(interferer_powers, dtype=float) * np.asarray(interferer_gains, dtype=float)))
    return signal_power * gain / (noise + overlap * i)


def required_tx_power(demand, bandwidth, interference_plus_noise, gain, max_tx_power=None):
    """Transmit power that exactly meets ``demand`` over ``bandwidth``."""
    bandwidth = np.asarray(bandwidth, dtype=float)
    if np.any(bandwidth <= 0):
        raise ValueError("bandwidth must be positive")
    with np.errstate(over="ignore"):
        p = np.expm1(np.log(2.0) * np.asarray(demand, dtype=float) / bandwidth) * interference_plus_noise / gain
    if max_tx_power is not None and np.any(p > max_tx_power):
        raise OverBudgetError(f"needs {np.max(p):.4g} W > {max_tx_power:.4g} W")
    return p if np.ndim(p) else float(p)


def association_score(demand, bandwidth, gain, alpha):
    """Lower is better: blends the rate-dependent power factor and the path gain."""
    with np.errstate(over="ignore"):
        bw_term = np.expm1(np.log(2.0) * np.asarray(demand, dtype=float) / np.asarray(bandwidth, dtype=float))
    s = bw_term ** alpha * (1.0 / np.asarray(gain, dtype=float)) ** (1.0 - alpha)
    return s if np.ndim(s) else float(s)


# -- interference-aware helpers -------------------------------------------------

def overlap_weight(bandwidth, spread_over):
    """Share of an interferer's power that lands in a band of width ``bandwidth``.

    ``spread_over=None`` is the full-overlap model.
    """
    if spread_over is None:
        return np.ones_like(np.asarray(bandwidth, dtype=float))
    return np.asarray(bandwidth, dtype=float) / spread_over


def noise_plus_interference(bandwidth, noise_psd, interference, spread_over):
    return bandwidth * noise_psd + overlap_weight(bandwidth, spread_over) * interference


def _min_bandwidth_linear(demand, snr_hz):
    """Solve ``B ln(1 + s / B) = C ln 2`` for B when noise and interference scale with B.

    ``s`` is the received power over the per-hertz noise-plus-interference
    density. The non-trivial root is ``B = s / (y - 1)`` with
    ``y = -W_{-1}(-r e^{-r}) / r`` and ``r = C ln 2 / s``; no root exists
    for ``r >= 1``.
    """
    r = demand * math.log(2.0) / snr_hz
    ok = (r > 0) & (r < 1)
    rr = np.where(ok, r, 0.5)
    w = lambertw(-rr * np.exp(-rr), k=-1).real
    y_minus_1 = -w / rr - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(ok & (y_minus_1 > 0), snr_hz / y_minus_1, np.inf)
    return b


def min_bandwidth_at_power(demand, rx_power, noise_psd, interference, spread_over, upper,
                           iterations: int = 80):
    """Smallest bandwidth whose capacity at received power ``rx_power`` covers ``demand``.

    Noise (and, for the spread model, interference) grows with the bandwidth,
    so this solves ``B log2(1 + S / NI(B)) = C`` for B on ``(0, upper]``.
    Returns ``inf`` where even ``upper`` is insufficient. The returned value
    always satisfies the demand.
    """
    demand, rx_power, interference, upper = np.broadcast_arrays(
        np.asarray(demand, float), np.asarray(rx_power, float),
        np.asarray(interference, float), np.asarray(upper, float))

    def cap(b):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return b * np.log1p(rx_power / noise_plus_interference(b, noise_psd, interference, spread_over)) / _LN2

    # capacity as B -> inf is S / (density ln 2) for the spread model, S / (n0 ln 2) otherwise
    density = noise_psd + (interference / spread_over if spread_over is not None else 0.0)
    with np.errstate(divide="ignore"):
        limit = rx_power / (density * math.log(2.0))
    feasible = np.where(np.isfinite(upper), cap(np.where(np.isfinite(upper), upper, 1.0)) >= demand,
                        limit > demand)
    out = np.full(demand.shape, np.nan)
    if spread_over is not None:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            guess = _min_bandwidth_linear(demand, rx_power / (noise_psd + interference / spread_over))
            guess = np.minimum(guess * (1.0 + 1e-12), upper)
        good = np.isfinite(guess) & (cap(guess) >= demand)
        out = np.where(good, guess, np.nan)
    todo = feasible & np.isnan(out) & (demand > 0)
    if np.any(todo):
        idx = todo
        d, u = demand[idx], upper[idx]
        hi = np.log(np.where(np.isfinite(u), u, 1e15))
        lo = hi - 40.0
        sub_rx, sub_i = rx_power[idx], interference[idx]
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            b = np.exp(mid)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                okm = b * np.log1p(sub_rx / noise_plus_interference(b, noise_psd, sub_i, spread_over)) / _LN2 >= d
            hi = np.where(okm, mid, hi)
            lo = np.where(okm, lo, mid)
        out[idx] = np.exp(hi)
    out = np.where(feasible, out, np.inf)
    out = np.where(demand <= 0, 0.0, out)
    return out if out.ndim else float(out)


@dataclass
class FixedPointResult:
    powers: np.ndarray
    requirement: np.ndarray  # unclamped required power at the returned state
    clamped: np.ndarray
    converged: np.ndarray
    sweeps: int


def fixed_point_powers(demand, bandwidth, gain, coupling, noise_psd, p_max, *, spread_over=None,
                       tol_db: float = 0.01, max_iter: int = 100, active=None) -> FixedPointResult:
    """Jointly solve every user's required power against the others' interference.

    Shapes: ``demand``, ``bandwidth``, ``gain`` are ``(..., n)``; ``coupling`` is
    ``(..., n, n)`` with ``coupling[..., u, i]`` the gain from interferer ``i`` to
    the receiver serving ``u`` (zero on the diagonal and for excluded pairs).
    Iteration starts at ``p_max`` so the sequence decreases monotonically and
    every returned iterate meets each unclamped user's demand. Batch members
    freeze individually once converged.
    """
    demand = np.asarray(demand, float)
    bandwidth = np.asarray(bandwidth, float)
    if active is None:
        active = bandwidth > 0
    active = np.asarray(active, bool)
    safe_bw = np.where(active, bandwidth, 1.0)
    with np.errstate(over="ignore"):
        a = np.where(active, np.expm1(np.log(2.0) * demand / safe_bw), 0.0)
    noise = np.where(active, safe_bw * noise_psd, 0.0)
    w = np.where(active, overlap_weight(safe_bw, spread_over), 0.0)
    safe_gain = np.where(active, gain, 1.0)
    p_cap = np.where(active, np.broadcast_to(p_max, demand.shape), 0.0)

    def requirement(p):
        interference = np.sum(coupling * p[..., None, :], axis=-1)
        return a * (noise + w * interference) / safe_gain

    p = p_cap.copy()
    done = np.zeros(demand.shape[:-1], bool)
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        new = np.minimum(requirement(p), p_cap)
        with np.errstate(divide="ignore", invalid="ignore"):
            change = np.abs(10.0 * np.log10(new / p))
        change = np.where((new == p), 0.0, change)
        change = np.max(change, axis=-1, initial=0.0)
        upd = ~done
        p = np.where(upd[..., None], new, p)
        done = done | (change < tol_db)
        if done.all():
            break
    req = requirement(p)
    clamped = active & (req > p_cap * (1.0 + 1e-12))
    return FixedPointResult(powers=p, requirement=req, clamped=clamped, converged=done, sweeps=sweeps)
