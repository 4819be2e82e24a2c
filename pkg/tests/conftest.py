import numpy as np
import pytest

from hetnetsim.assoc import NetworkState
from hetnetsim.linkmath import AlgorithmConfig
from hetnetsim.netmodel import BaseStation, Position, Tier, Topology, UserEquipment


def make_state(gains, demand, bandwidth=10e6, config=None, macro=None, cio=0.0, p_max_dbm=20.0,
               noise_figure=5.0, noise_density=-174.0):
    """NetworkState over hand-picked gains (users x BS), bypassing geometry."""
    gains = np.atleast_2d(np.asarray(gains, float))
    n_u, n_b = gains.shape
    bw = np.broadcast_to(np.asarray(bandwidth, float), (n_b,))
    macro = [False] * n_b if macro is None else macro
    bss = [BaseStation(id=b, tier=Tier.MACRO if macro[b] else Tier.SMALL, site_position=Position(0.0, 0.0),
                       height=25.0 if macro[b] else 10.0, total_bandwidth=float(bw[b]),
                       dl_tx_power=46.0 if macro[b] else 30.0, antenna_gain_peak=0.0,
                       noise_figure=noise_figure, cio_offset=0.0 if macro[b] else cio,
                       sector_azimuth=0.0 if macro[b] else None)
           for b in range(n_b)]
    ues = [UserEquipment(id=u, position=Position(0.0, 0.0), indoor=False,
                         capacity_requirement=float(np.broadcast_to(demand, (n_u,))[u]), max_tx_power=p_max_dbm)
           for u in range(n_u)]
    return NetworkState(Topology(base_stations=bss, users=ues), gains, config or AlgorithmConfig(),
                        thermal_noise_density=noise_density)


@pytest.fixture
def state_factory():
    return make_state


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
