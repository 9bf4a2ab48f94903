import pytest

from emm.config import ScenarioConfig
from emm.traffic_sim import HostProfile, HostRole


def host(host_id="h0", ip="10.0.0.1", role=HostRole.LEGITIMATE_HTTP, rate=48.0, size=400,
         start=0.0, end=300.0, **kw):
    return HostProfile(host_id, ip, role, rate, size, start, end, **kw)


def scenario(hosts=(), duration=300, window=1, seed=7, scale=1.0, capacity=1e6, **kw):
    return ScenarioConfig(duration_s=duration, window_s=window, seed=seed, hosts=tuple(hosts),
                          victim_ip="192.168.200.53", link_capacity_pps=capacity, scale=scale,
                          **kw)


@pytest.fixture
def small_flood():
    """5 clients at 9.6 pps plus one 184 pps flooder starting at t=20."""
    clients = [host(f"c{i}", f"10.0.0.{i + 1}", rate=9.6, end=60) for i in range(5)]
    bot = host("bot", "10.0.1.1", HostRole.ATTACKER_HTTP, rate=184, start=20, end=60)
    return scenario(clients + [bot], duration=60)


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
