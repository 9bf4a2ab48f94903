"""Seeded packet-event generator for legitimate and flooding hosts.

Each host is an independent Poisson source. Rates in a :class:`HostProfile`
are given at testbed scale (e.g. 184000 pps); a scenario's ``scale``
divides them down to desk-sized streams at generation time.
"""

from __future__ import annotations

import enum
import ipaddress
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator, NamedTuple

import numpy as np

from emm.errors import ConfigError

if TYPE_CHECKING:
    from emm.config import ScenarioConfig

EPHEMERAL_PORTS = (49152, 65535)
HTTP_PORT = 80
IPERF_PORT = 5001
UDP_SIZE_RANGE = (64, 1470)
MIN_PACKET, MAX_PACKET = 64, 65507


class Protocol(enum.IntEnum):
    ICMP = 1
    TCP = 6
    UDP = 17


class HostRole(str, enum.Enum):
    LEGITIMATE_HTTP = "LegitimateHttp"
    LEGITIMATE_UDP = "LegitimateUdp"
    ATTACKER_HTTP = "AttackerHttp"
    ATTACKER_UDP = "AttackerUdp"

    @property
    def is_attacker(self) -> bool:
        return self in (HostRole.ATTACKER_HTTP, HostRole.ATTACKER_UDP)

    @property
    def protocol(self) -> Protocol:
        if self in (HostRole.LEGITIMATE_HTTP, HostRole.ATTACKER_HTTP):
            return Protocol.TCP
        return Protocol.UDP


class PacketEvent(NamedTuple):
    t: float
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: Protocol
    size_bytes: int
    origin: str


@dataclass(frozen=True)
class HostProfile:
    """One traffic source.

    ``packet_size_bytes`` is either a fixed size or an inclusive ``(lo, hi)``
    range sampled uniformly per packet. ``spoofed`` marks a profile that is
    allowed to reuse another host's address.
    """

    host_id: str
    ip: str
    role: HostRole
    rate_pps: float
    packet_size_bytes: int | tuple[int, int]
    start_s: float
    end_s: float
    spoofed: bool = False
    src_port: int | None = None

    def __post_init__(self):
        try:
            ipaddress.IPv4Address(self.ip)
        except ValueError as exc:
            raise ConfigError(f"host {self.host_id}: bad ip {self.ip!r}") from exc
        if not isinstance(self.role, HostRole):
            object.__setattr__(self, "role", HostRole(self.role))
        if isinstance(self.packet_size_bytes, list):
            object.__setattr__(self, "packet_size_bytes", tuple(self.packet_size_bytes))
        if not self.rate_pps >= 0:
            raise ConfigError(f"host {self.host_id}: rate_pps must be >= 0")
        if not self.start_s < self.end_s:
            raise ConfigError(f"host {self.host_id}: start_s must be < end_s")
        lo, hi = self.size_range
        if not (MIN_PACKET <= lo <= hi <= MAX_PACKET):
            raise ConfigError(
                f"host {self.host_id}: packet size must lie in [{MIN_PACKET}, {MAX_PACKET}]"
            )
        if self.src_port is not None and not 0 <= self.src_port <= 0xFFFF:
            raise ConfigError(f"host {self.host_id}: src_port out of range")

    @property
    def size_range(self) -> tuple[int, int]:
        if isinstance(self.packet_size_bytes, tuple):
            lo, hi = self.packet_size_bytes
            return int(lo), int(hi)
        return int(self.packet_size_bytes), int(self.packet_size_bytes)

    @property
    def mean_size_bytes(self) -> float:
        lo, hi = self.size_range
        return (lo + hi) / 2


def _ip_range(first: str, n: int) -> list[str]:
    base = ipaddress.IPv4Address(first)
    return [str(base + i) for i in range(n)]


def http_flood_profile(
    attack_rate_pps: float,
    start_s: float,
    end_s: float,
    n_hosts: int,
    *,
    role: HostRole = HostRole.ATTACKER_HTTP,
    first_ip: str = "10.0.1.1",
    packet_size_bytes: int = 400,
    id_prefix: str = "bot",
) -> list[HostProfile]:
    """Split an HTTP GET flood evenly over ``n_hosts`` sources.

    Each host gets ``floor(rate / n)`` pps; the last host also takes the
    remainder so the rates sum to ``attack_rate_pps``. The same split is
    used for legitimate HTTP clients by passing ``role``.
    """
    if not attack_rate_pps > 0:
        raise ConfigError("attack_rate_pps must be > 0")
    if n_hosts < 1:
        raise ConfigError("n_hosts must be >= 1")
    if not start_s < end_s:
        raise ConfigError(f"invalid interval [{start_s}, {end_s})")
    share = math.floor(attack_rate_pps / n_hosts)
    rates = [float(share)] * (n_hosts - 1)
    rates.append(attack_rate_pps - share * (n_hosts - 1))
    return [
        HostProfile(
            host_id=f"{id_prefix}{i}",
            ip=ip,
            role=role,
            rate_pps=rate,
            packet_size_bytes=packet_size_bytes,
            start_s=start_s,
            end_s=end_s,
        )
        for i, (ip, rate) in enumerate(zip(_ip_range(first_ip, n_hosts), rates))
    ]


def udp_flood_profile(
    bandwidth_bps: float,
    start_s: float,
    duration_s: float,
    *,
    role: HostRole = HostRole.ATTACKER_UDP,
    size_range: tuple[int, int] = UDP_SIZE_RANGE,
    host_id: str = "udp0",
    ip: str = "10.0.2.1",
    src_port: int = 40000,
) -> HostProfile:
    """An iperf-style UDP stream of random-size datagrams.

    The packet rate is set from the mean datagram size so that the
    expected bit rate equals ``bandwidth_bps``.
    """
    if not bandwidth_bps > 0:
        raise ConfigError("bandwidth_bps must be > 0")
    if not duration_s > 0:
        raise ConfigError("duration_s must be > 0")
    lo, hi = size_range
    rate = bandwidth_bps / (8 * (lo + hi) / 2)
    return HostProfile(
        host_id=host_id,
        ip=ip,
        role=role,
        rate_pps=rate,
        packet_size_bytes=(lo, hi) if lo != hi else lo,
        start_s=start_s,
        end_s=start_s + duration_s,
        src_port=src_port,
    )


def _host_columns(host: HostProfile, rng: np.random.Generator, duration_s: float, scale: float):
    start = max(host.start_s, 0.0)
    end = min(host.end_s, duration_s)
    if end <= start or host.rate_pps == 0:
        return None
    n = int(rng.poisson(host.rate_pps / scale * (end - start)))
    t = np.sort(rng.uniform(start, end, n))
    if host.role.protocol is Protocol.TCP:
        sport = rng.integers(EPHEMERAL_PORTS[0], EPHEMERAL_PORTS[1] + 1, n)
    else:
        sport = np.full(n, host.src_port if host.src_port is not None else IPERF_PORT)
    lo, hi = host.size_range
    size = rng.integers(lo, hi + 1, n) if hi > lo else np.full(n, lo)
    return t, sport, size


def generate_events(cfg: ScenarioConfig) -> Iterator[PacketEvent]:
    """Merged, time-ordered packet stream for every host in ``cfg``.

    One child seed per host is spawned from ``cfg.seed``, so the stream is a
    pure function of the configuration.
    """
    hosts = list(cfg.hosts)
    if not hosts:
        return iter(())
    children = np.random.SeedSequence(cfg.seed).spawn(len(hosts))
    parts = []
    for idx, (host, child) in enumerate(zip(hosts, children)):
        cols = _host_columns(host, np.random.default_rng(child), cfg.duration_s, cfg.scale)
        if cols is not None:
            parts.append((idx, *cols))
    if not parts:
        return iter(())
    t = np.concatenate([p[1] for p in parts])
    owner = np.concatenate([np.full(len(p[1]), p[0]) for p in parts])
    sport = np.concatenate([p[2] for p in parts])
    size = np.concatenate([p[3] for p in parts])
    order = np.argsort(t, kind="stable")
    return _emit(hosts, cfg.victim_ip, t[order], owner[order], sport[order], size[order])


def _emit(hosts, victim_ip, t, owner, sport, size):
    static = [
        (
            h.ip,
            HTTP_PORT if h.role.protocol is Protocol.TCP else IPERF_PORT,
            h.role.protocol,
            h.host_id,
        )
        for h in hosts
    ]
    for ti, oi, sp, sz in zip(t.tolist(), owner.tolist(), sport.tolist(), size.tolist()):
        ip, dport, proto, origin = static[oi]
        yield PacketEvent(ti, ip, victim_ip, sp, dport, proto, sz, origin)


def expected_event_count(cfg: ScenarioConfig) -> float:
    total = 0.0
    for h in cfg.hosts:
        span = max(0.0, min(h.end_s, cfg.duration_s) - max(h.start_s, 0.0))
        total += h.rate_pps / cfg.scale * span
    return total
