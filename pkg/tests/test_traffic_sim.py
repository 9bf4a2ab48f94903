from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emm.errors import ConfigError
from emm.traffic_sim import (HostRole, Protocol, expected_event_count, generate_events,
                             http_flood_profile, udp_flood_profile)

from conftest import host, scenario


@pytest.mark.parametrize("rate, n, expected", [
    (184000, 5, [36800] * 5),
    (100, 1, [100]),
    (10, 3, [3, 3, 4]),
])
def test_http_flood_split(rate, n, expected):
    profiles = http_flood_profile(rate, 0, 3600, n)
    assert [p.rate_pps for p in profiles] == expected
    assert all(p.role is HostRole.ATTACKER_HTTP for p in profiles)
    assert len({p.ip for p in profiles}) == n


def test_http_flood_bad_interval():
    with pytest.raises(ConfigError):
        http_flood_profile(100, 10, 10, 1)
    with pytest.raises(ConfigError):
        http_flood_profile(0, 0, 10, 1)


def test_udp_flood_rate_from_mean_size():
    p = udp_flood_profile(20e6, 0, 400)
    # exact rational arithmetic as the independent check
    mean = Fraction(64 + 1470, 2)
    assert mean == 767
    assert p.rate_pps == pytest.approx(float(Fraction(20_000_000) / (8 * mean)), rel=1e-12)
    assert p.rate_pps == pytest.approx(3259.45, abs=0.01)
    assert (p.start_s, p.end_s) == (0, 400)
    assert p.mean_size_bytes == 767


def test_udp_normal_profile_and_pinned_size():
    normal = udp_flood_profile(10e6, 0, 300, role=HostRole.LEGITIMATE_UDP)
    assert normal.role is HostRole.LEGITIMATE_UDP and normal.end_s == 300
    unit = udp_flood_profile(8 * 64 * 1, 0, 1, size_range=(64, 64))
    assert unit.rate_pps == 1.0
    assert unit.packet_size_bytes == 64


def test_profile_invariants():
    with pytest.raises(ConfigError):
        host(rate=-1)
    with pytest.raises(ConfigError):
        host(start=5, end=5)
    with pytest.raises(ConfigError):
        host(size=63)
    with pytest.raises(ConfigError):
        scenario([host("a"), host("b")])  # same ip, no spoofing flag
    scenario([host("a"), host("b", role=HostRole.ATTACKER_HTTP, spoofed=True)])


def test_duration_must_be_multiple_of_window():
    with pytest.raises(ConfigError):
        scenario(duration=10, window=3)
    with pytest.raises(ConfigError):
        scenario(capacity=0)


def test_zero_hosts_empty_stream():
    assert list(generate_events(scenario([]))) == []


def test_single_host_count_within_poisson_band():
    cfg = scenario([host(rate=48)], seed=7)
    events = list(generate_events(cfg))
    assert expected_event_count(cfg) == 14400
    assert abs(len(events) - 14400) <= 0.05 * 14400


def test_scale_divides_rates():
    cfg = scenario([host(rate=48000)], scale=1000, seed=3)
    assert abs(len(list(generate_events(cfg))) - 14400) <= 720


def test_determinism(small_flood):
    a = list(generate_events(small_flood))
    b = list(generate_events(small_flood))
    assert a == b
    assert repr(a).encode() == repr(b).encode()


def test_protocol_purity_and_ordering(small_flood):
    cfg = scenario(list(small_flood.hosts) + [
        udp_flood_profile(8 * 767 * 20, 0, 60, host_id="u", ip="10.0.2.1")], duration=60)
    events = list(generate_events(cfg))
    ts = [e.t for e in events]
    assert ts == sorted(ts)
    roles = {h.host_id: h.role for h in cfg.hosts}
    for e in events:
        if roles[e.origin] in (HostRole.ATTACKER_HTTP, HostRole.LEGITIMATE_HTTP):
            assert e.protocol is Protocol.TCP and e.dst_port == 80
            assert 49152 <= e.src_port <= 65535
        else:
            assert e.protocol is Protocol.UDP
            assert 64 <= e.size_bytes <= 1470


def test_activity_interval_respected(small_flood):
    bot_times = [e.t for e in generate_events(small_flood) if e.origin == "bot"]
    assert bot_times and min(bot_times) >= 20 and max(bot_times) < 60


@settings(max_examples=25, deadline=None)
@given(rate=st.floats(5, 200), duration=st.integers(50, 200), seed=st.integers(0, 2**64 - 1))
def test_rate_within_six_sigma(rate, duration, seed):
    cfg = scenario([host(rate=rate, end=duration)], duration=duration, seed=seed)
    n = sum(1 for _ in generate_events(cfg))
    mu = rate * duration
    assert abs(n - mu) <= 6 * mu ** 0.5 + 1


@settings(max_examples=15, deadline=None)
@given(rate=st.floats(50, 200), seed=st.integers(0, 2**64 - 1))
def test_rate_fidelity_five_percent(rate, seed):
    # at >= 10k expected events the 5% band is wider than 5 sigma
    cfg = scenario([host(rate=rate, end=200)], duration=200, seed=seed)
    n = sum(1 for _ in generate_events(cfg))
    assert abs(n - rate * 200) <= 0.05 * rate * 200
