import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetnetsim import oracle
from hetnetsim.assoc import POLICIES
from hetnetsim.linkmath import AlgorithmConfig


def instance(gains, demand, bandwidth=8e4, quanta=8, **kw):
    gains = np.atleast_2d(gains)
    return oracle.MicroInstance(gains=gains, demand=demand, bandwidth=[bandwidth] * gains.shape[1],
                                quantum=bandwidth / quanta, **kw)


class TestValidation:
    def test_size_limits(self):
        with pytest.raises(oracle.OracleSizeError):
            instance(np.full((5, 1), 1e-10), [1e3] * 5)
        with pytest.raises(oracle.OracleSizeError):
            instance(np.full((1, 4), 1e-10), [1e3])

    def test_quantum_must_divide(self):
        with pytest.raises(ValueError):
            oracle.MicroInstance(gains=[[1e-10]], demand=[1e3], bandwidth=[1e4], quantum=3e3)

    def test_infeasible_reports_none(self):
        res = oracle.brute_force_min_power(instance([[1e-20]], [5e4]))
        assert not res.feasible and res.total_power == np.inf


class TestOptimum:
    def test_lone_user_gets_full_bandwidth(self):
        inst = instance([[1e-11]], [2e4], algorithm=AlgorithmConfig(sinr_floor_db=None))
        res = oracle.brute_force_min_power(inst)
        assert res.allocation == (8e4,)

    def test_lone_user_limited_by_sinr_floor(self):
        res = oracle.brute_force_min_power(instance([[1e-11]], [2e4]))
        assert res.allocation == (2e4,)

    def test_symmetric_split(self):
        g = np.array([[1e-10, 1e-12], [1e-12, 1e-10]])
        res = oracle.brute_force_min_power(instance(g, [2e4, 2e4]))
        assert res.association == (0, 1)

    def test_finer_grid_never_worse(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            inst = oracle.random_micro_instance(rng, n_bs=2, n_users=2, quanta=4)
            fine = oracle.MicroInstance(gains=inst.gains, demand=inst.demand, bandwidth=inst.bandwidth,
                                        quantum=inst.quantum / 2)
            assert oracle.brute_force_min_power(fine).total_power <= oracle.brute_force_min_power(inst).total_power

    def test_deterministic(self):
        inst = oracle.random_micro_instance(np.random.default_rng(2), n_bs=2, n_users=3)
        a, b = oracle.brute_force_min_power(inst), oracle.brute_force_min_power(inst)
        assert a.association == b.association and a.allocation == b.allocation
        assert a.total_power == b.total_power


class TestHeuristicsAgainstOracle:
    def test_three_users_two_bs(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            inst = oracle.random_micro_instance(rng, n_bs=2, n_users=3)
            opt = oracle.brute_force_min_power(inst)
            for p in POLICIES:
                assert oracle.run_heuristic(inst, p).total_power >= opt.total_power

    def test_semi_exact_on_single_bs(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            inst = oracle.random_micro_instance(rng, n_bs=1)
            opt = oracle.brute_force_min_power(inst)
            h = oracle.run_heuristic(inst, "semi_distributive")
            assert h.total_power == opt.total_power
            assert h.allocation == opt.allocation

    def test_chain_oracle_heuristic_baseline(self):
        # oracle <= each proposed heuristic <= best baseline, per instance
        rng = np.random.default_rng(0)
        violations = []
        for i in range(150):
            inst = oracle.random_micro_instance(rng)
            opt = oracle.brute_force_min_power(inst).total_power
            base = min(oracle.run_heuristic(inst, p).total_power for p in ("max_rsrp", "cio"))
            for p in ("semi_distributive", "distributive"):
                total = oracle.run_heuristic(inst, p).total_power
                assert opt <= total
                if total > base:
                    violations.append((i, p, total, base))
        assert violations == []


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_oracle_is_a_lower_bound(seed):
    inst = oracle.random_micro_instance(np.random.default_rng(seed))
    opt = oracle.brute_force_min_power(inst)
    assert opt.feasible
    for p in POLICIES:
        assert oracle.run_heuristic(inst, p).total_power >= opt.total_power


def test_json_round_trip():
    inst = oracle.random_micro_instance(np.random.default_rng(6), n_bs=3, n_users=4)
    back = oracle.MicroInstance.from_dict(json.loads(inst.to_json()))
    assert np.array_equal(back.gains, inst.gains)
    assert back.quantum == inst.quantum and back.algorithm == inst.algorithm
    assert oracle.brute_force_min_power(back).total_power == oracle.brute_force_min_power(inst).total_power
