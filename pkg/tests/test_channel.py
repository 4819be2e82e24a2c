import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hetnetsim import channel as ch
from hetnetsim import netmodel as nm

P = ch.ChannelParams.from_reference()


def macro(az=0.0):
    return nm.BaseStation(0, nm.Tier.MACRO, nm.Position(0, 0), 25.0, 10e6, 46.0, 14.0, 5.0, sector_azimuth=az)


def small():
    return nm.BaseStation(1, nm.Tier.SMALL, nm.Position(0, 0), 10.0, 10e6, 30.0, 5.0, 5.0)


def ue(x, y, indoor=False):
    return nm.UserEquipment(0, nm.Position(x, y), indoor, 1000.0)


class TestAntenna:
    def test_boresight(self):
        assert ch.lin2db(ch.sector_antenna_gain(macro(), nm.Position(100, 0), P)) == pytest.approx(14.0)

    def test_half_power_beamwidth(self):
        th = math.radians(70)
        g = ch.sector_antenna_gain(macro(), nm.Position(100 * math.cos(th), 100 * math.sin(th)), P)
        assert ch.lin2db(g) == pytest.approx(2.0)

    def test_back_lobe_floor(self):
        assert ch.lin2db(ch.sector_antenna_gain(macro(), nm.Position(-100, 0), P)) == pytest.approx(14.0 - 25.0)

    def test_rotated_sector(self):
        g = ch.sector_antenna_gain(macro(120.0), nm.Position(-50, 50 * math.sqrt(3)), P)
        assert ch.lin2db(g) == pytest.approx(14.0)

    @given(x=st.floats(-500, 500), y=st.floats(-500, 500))
    def test_small_is_omni(self, x, y):
        assert ch.lin2db(ch.sector_antenna_gain(small(), nm.Position(x, y), P)) == pytest.approx(5.0)


class TestShadowing:
    def test_degenerate(self):
        p0 = ch.ChannelParams.from_reference(shadowing_sigma_macro=0.0, shadowing_sigma_small=0.0)
        rng = np.random.default_rng(0)
        assert ch.sample_shadowing(nm.Tier.MACRO, False, rng, p0) == 1.0
        assert ch.sample_shadowing(nm.Tier.SMALL, True, rng, p0) == pytest.approx(0.01)

    def test_spread(self):
        rng = np.random.default_rng(1)
        db = np.array([ch.lin2db(ch.sample_shadowing(nm.Tier.MACRO, False, rng, P)) for _ in range(100_000)])
        assert abs(db.std() - 8.0) < 0.1

    def test_table_is_frozen(self):
        rng = np.random.default_rng(2)
        topo = nm.place_users(nm.place_small_cells(nm.build_hex_grid(), 1, rng), 2, rng)
        tab = ch.ShadowTable.draw(topo, P, rng)
        assert tab[3, 5] == tab[3, 5]
        with pytest.raises(ValueError):
            tab.values[0, 0] = 1.0


class TestLinkBudget:
    def test_unit_example(self):
        lb = ch.LinkBudget(1.0, 1.0, 1.0, 1.0 * 10.0 ** -2)
        assert lb.composite_gain == pytest.approx(0.01)

    def test_power_law(self):
        p = ch.ChannelParams(1.0, 4.0, 1.0, 4.0, d_min=1.0)
        a, beta = p.pathloss_terms(nm.Tier.MACRO)
        assert (a * 20.0 ** -beta) / (a * 40.0 ** -beta) == pytest.approx(16.0)

    def test_db_domain_cross_check(self):
        # UE at 100 m ground range on boresight, outdoor, no shadowing
        u, b = ue(math.sqrt(100**2 - 23.5**2), 0.0), macro()
        tab = ch.ShadowTable(np.ones((1, 1)))
        lb = ch.link_budget(u, b, P, tab)
        expected_db = 0.0 + 14.0 + 0.0 - (128.1 + 37.6 * math.log10(0.1))
        assert lb.composite_gain_db == pytest.approx(expected_db, abs=1e-9)
        assert ch.lin2db(lb.composite_gain) == pytest.approx(lb.composite_gain_db, rel=1e-9)

    def test_small_cell_reference_loss(self):
        u = ue(math.sqrt(1000**2 - 8.5**2), 0.0)
        lb = ch.link_budget(u, small(), P, ch.ShadowTable(np.ones((1, 2))))
        assert ch.lin2db(lb.pathloss) == pytest.approx(-140.7, abs=1e-9)

    def test_frequency_correction(self):
        p35 = ch.ChannelParams.from_reference(carrier_frequency=3.5e9)
        ratio = P.pathloss_constant_macro / p35.pathloss_constant_macro
        assert ch.lin2db(ratio) == pytest.approx(20 * math.log10(1.75))

    @given(d1=st.floats(10, 2000), d2=st.floats(10, 2000))
    def test_decreasing_in_distance(self, d1, d2):
        lo, hi = sorted((d1, d2))
        tab = ch.ShadowTable(np.ones((1, 1)))
        g = [ch.link_budget(ue(d, 0.0), macro(), P, tab).composite_gain for d in (lo, hi)]
        if hi > lo * 1.0001:
            assert g[1] < g[0]

    def test_matrix_matches_scalar(self):
        rng = np.random.default_rng(3)
        topo = nm.place_users(nm.place_small_cells(nm.build_hex_grid(), 1, rng), 3, rng)
        tab = ch.ShadowTable.draw(topo, P, rng)
        g = ch.gain_matrix(topo, P, tab)
        for u in topo.users[:20]:
            for b in topo.base_stations[::5]:
                assert g[u.id, b.id] == pytest.approx(ch.link_budget(u, b, P, tab).composite_gain, rel=1e-12)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            ch.ChannelParams(1.0, 2.0, 1.0, 3.0)
        with pytest.raises(ValueError):
            ch.ChannelParams(0.0, 3.0, 1.0, 3.0)


class TestNoise:
    def test_density(self):
        assert ch.watt2dbm(ch.noise_power(1.0, 0.0)) == pytest.approx(-174.0)
        assert ch.noise_power(1.0, 0.0) == pytest.approx(3.98e-21, rel=1e-3)

    def test_system_bandwidth(self):
        assert ch.watt2dbm(ch.noise_power(10e6, 5.0)) == pytest.approx(-99.0)
        assert ch.noise_power(10e6, 5.0) == pytest.approx(1.26e-13, rel=1e-2)

    def test_one_megahertz(self):
        assert ch.watt2dbm(ch.noise_power(1e6, 0.0)) == pytest.approx(-114.0)

    def test_rejects_nonpositive_bandwidth(self):
        with pytest.raises(ValueError):
            ch.noise_power(0.0, 5.0)


class TestRsrp:
    def _tab(self, db):
        return ch.ShadowTable(np.full((1, 2), ch.db2lin(db)))

    def test_tx_power_offset(self):
        u = ue(1000.0, 0.0)
        b, s = macro(), small()
        tab = self._tab(0.0)
        gm = ch.link_budget(u, b, P, tab).composite_gain_db
        assert ch.rsrp(u, b, tab, P) == pytest.approx(46.0 + gm)
        gs = ch.link_budget(u, s, P, tab).composite_gain_db
        assert ch.rsrp(u, s, tab, P) == pytest.approx(30.0 + gs)

    def test_equal_gains_rank_by_power(self):
        topo = nm.Topology([macro(), small()], [ue(0, 0)])
        r = ch.rsrp_matrix(topo, np.array([[1e-10, 1e-10]]))
        assert r[0, 0] == pytest.approx(-54.0) and r[0, 1] == pytest.approx(-70.0)
