import logging
import warnings

import numpy as np
import pytest

from mbnsim.scenario import Scenario, generate_topology, synthesize_channels

warnings.filterwarnings("ignore", message="Solution may be inaccurate")
logging.getLogger("mbnsim").setLevel(logging.ERROR)


def make_channels(scn: Scenario, seed: int):
    rng = np.random.default_rng(seed)
    topo = generate_topology(scn, rng)
    est, ideal = synthesize_channels(scn, topo, topo.user_x, rng)
    return topo, est, ideal


def toy_scenario(**overrides) -> Scenario:
    base = dict(
        num_tbs=2,
        num_ubs=1,
        num_users=2,
        m_thz=8,
        m_umb=4,
        cluster_t=1,
        cluster_u=1,
        qos_gbps=0.0,
        blocker_density=0.002,
        num_windows=1,
        speed_mps=0.0,
    )
    base.update(overrides)
    return Scenario(**base)


def small_scenario(**overrides) -> Scenario:
    base = dict(
        num_tbs=3,
        num_ubs=2,
        num_users=4,
        m_thz=16,
        m_umb=8,
        cluster_t=2,
        cluster_u=1,
        qos_gbps=0.0,
        blocker_density=0.002,
        num_windows=2,
        speed_mps=40.0,
    )
    base.update(overrides)
    return Scenario(**base)


def desk_scenario(**overrides) -> Scenario:
    base = dict(
        num_tbs=4,
        num_ubs=2,
        num_users=8,
        m_thz=64,
        m_umb=16,
        cluster_t=2,
        cluster_u=2,
        qos_gbps=0.0,
        blocker_density=0.002,
        num_windows=1,
        speed_mps=0.0,
    )
    base.update(overrides)
    return Scenario(**base)


@pytest.fixture
def toy():
    return toy_scenario()


@pytest.fixture
def small():
    return small_scenario()
