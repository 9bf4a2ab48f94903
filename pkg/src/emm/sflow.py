"""sFlow-style sampling, a compact datagram codec, and per-window flow records.

Wire layout (big-endian, no padding)::

    magic "sFL5" (4) | agent_ip (4) | sequence (4) | sampling_rate (4) | count (2)
    count x [ src_ip (4) | dst_ip (4) | src_port (2) | dst_port (2) | proto (1) | size (2) ]

A ``.sflow5`` replay file is a plain concatenation of datagrams. For replay
the exporter stores the window index in ``sequence``; every window is
flushed in one or more datagrams (a header-only datagram for an empty
window), so the collector can rebuild the time axis at window resolution.
"""

from __future__ import annotations

import ipaddress
import math
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

from emm.errors import EncodingError, MalformedDatagram, OrderingError
from emm.traffic_sim import PacketEvent, Protocol

MAGIC = 0x73464C35
HEADER = struct.Struct(">IIIIH")
SAMPLE = struct.Struct(">IIHHBH")
MAX_SAMPLES = 128
_PROTOCOLS = {p.value for p in Protocol}


class SampleHeader(NamedTuple):
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: Protocol
    size_bytes: int


@dataclass(frozen=True)
class SampledDatagram:
    agent_ip: str
    sequence: int
    sampling_rate: int
    samples: tuple[SampleHeader, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))


def _ip_to_int(ip: str) -> int:
    return int(ipaddress.IPv4Address(ip))


def _int_to_ip(n: int) -> str:
    return str(ipaddress.IPv4Address(n))


def encode_datagram(d: SampledDatagram) -> bytes:
    if len(d.samples) > MAX_SAMPLES:
        raise EncodingError(f"{len(d.samples)} samples exceed the {MAX_SAMPLES}-sample limit")
    if not 1 <= d.sampling_rate <= 0xFFFFFFFF:
        raise EncodingError("sampling_rate must fit in 32 bits and be >= 1")
    if not 0 <= d.sequence <= 0xFFFFFFFF:
        raise EncodingError("sequence must fit in 32 bits")
    try:
        out = [HEADER.pack(MAGIC, _ip_to_int(d.agent_ip), d.sequence, d.sampling_rate,
                           len(d.samples))]
        for s in d.samples:
            if int(s.protocol) not in _PROTOCOLS:
                raise EncodingError(f"unsupported protocol {s.protocol!r}")
            if not 1 <= s.size_bytes <= 0xFFFF:
                raise EncodingError(f"sample size {s.size_bytes} does not fit in 16 bits")
            out.append(SAMPLE.pack(_ip_to_int(s.src_ip), _ip_to_int(s.dst_ip), s.src_port,
                                   s.dst_port, int(s.protocol), s.size_bytes))
    except (struct.error, ValueError) as exc:
        if isinstance(exc, EncodingError):
            raise
        raise EncodingError(str(exc)) from exc
    return b"".join(out)


def _parse_at(b: bytes, pos: int) -> tuple[SampledDatagram, int]:
    n = len(b)
    if n < pos + 4:
        raise MalformedDatagram("truncated magic", pos)
    if int.from_bytes(b[pos:pos + 4], "big") != MAGIC:
        raise MalformedDatagram("bad magic", pos)
    for off, name in ((4, "agent_ip"), (8, "sequence"), (12, "sampling_rate"), (16, "count")):
        width = 2 if name == "count" else 4
        if n < pos + off + width:
            raise MalformedDatagram(f"truncated {name}", pos + off)
    _, agent, seq, rate, count = HEADER.unpack_from(b, pos)
    if rate == 0:
        raise MalformedDatagram("sampling_rate is zero", pos + 12)
    if count > MAX_SAMPLES:
        raise MalformedDatagram(f"sample count {count} exceeds {MAX_SAMPLES}", pos + 16)
    samples = []
    cur = pos + HEADER.size
    for _ in range(count):
        if n < cur + SAMPLE.size:
            raise MalformedDatagram("truncated sample", cur)
        src, dst, sport, dport, proto, size = SAMPLE.unpack_from(b, cur)
        if proto not in _PROTOCOLS:
            raise MalformedDatagram(f"unknown protocol byte {proto}", cur + 12)
        if size == 0:
            raise MalformedDatagram("zero sample size", cur + 13)
        samples.append(SampleHeader(_int_to_ip(src), _int_to_ip(dst), sport, dport,
                                    Protocol(proto), size))
        cur += SAMPLE.size
    return SampledDatagram(_int_to_ip(agent), seq, rate, tuple(samples)), cur


def parse_datagram(b: bytes) -> SampledDatagram:
    d, end = _parse_at(bytes(b), 0)
    if end != len(b):
        raise MalformedDatagram("bytes beyond declared sample count", end)
    return d


def iter_datagrams(data: bytes) -> Iterator[SampledDatagram]:
    """Decode a concatenation of datagrams (the ``.sflow5`` file body)."""
    data = bytes(data)
    pos = 0
    while pos < len(data):
        d, pos = _parse_at(data, pos)
        yield d


def write_sflow_file(path: str | Path, datagrams: Iterable[SampledDatagram]) -> None:
    Path(path).write_bytes(b"".join(encode_datagram(d) for d in datagrams))


def read_sflow_file(path: str | Path) -> list[SampledDatagram]:
    return list(iter_datagrams(Path(path).read_bytes()))


def sample_packets(events: Iterable[PacketEvent], sampling_rate: int,
                   seed: int) -> Iterator[PacketEvent]:
    """Keep each event independently with probability ``1 / sampling_rate``."""
    if sampling_rate < 1:
        raise ValueError("sampling_rate must be >= 1")
    if sampling_rate == 1:
        yield from events
        return
    rng = random.Random(seed)
    p = 1.0 / sampling_rate
    for e in events:
        if rng.random() < p:
            yield e


class FlowKey(NamedTuple):
    switch_id: str
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: Protocol


@dataclass
class FlowRecord:
    key: FlowKey
    counter: int
    bytes: int
    window_index: int
    sampling_rate: int = 1

    @property
    def estimated_packets(self) -> int:
        return self.counter * self.sampling_rate


@dataclass
class Window:
    index: int
    start_s: float
    end_s: float
    records: dict[FlowKey, FlowRecord] = field(default_factory=dict)
    per_protocol_totals: dict[Protocol, int] = field(default_factory=dict)
    sampling_rate: int = 1

    def add(self, e: PacketEvent, switch_id: str) -> None:
        key = FlowKey(switch_id, e.src_ip, e.dst_ip, e.src_port, e.dst_port, e.protocol)
        rec = self.records.get(key)
        if rec is None:
            self.records[key] = FlowRecord(key, 1, e.size_bytes, self.index, self.sampling_rate)
        else:
            rec.counter += 1
            rec.bytes += e.size_bytes
        self.per_protocol_totals[e.protocol] = self.per_protocol_totals.get(e.protocol, 0) + 1

    def source_counts(self, protocol: Protocol) -> dict[str, int]:
        """Estimated packets per source address for one protocol."""
        counts: dict[str, int] = {}
        for key, rec in self.records.items():
            if key.protocol == protocol:
                counts[key.src_ip] = counts.get(key.src_ip, 0) + rec.estimated_packets
        return counts

    def sorted_records(self) -> list[FlowRecord]:
        return [self.records[k] for k in sorted(self.records)]


def aggregate_window(samples: Iterable[PacketEvent], window_s: float, switch_id: str, *,
                     sampling_rate: int = 1,
                     n_windows: int | None = None) -> Iterator[Window]:
    """Group a time-ordered sample stream into consecutive windows.

    Window ``k`` covers ``[k*window_s, (k+1)*window_s)``. Windows without
    samples are still emitted; ``n_windows`` pads the tail up to a fixed
    length.
    """
    if not window_s > 0:
        raise ValueError("window_s must be > 0")

    def fresh(k: int) -> Window:
        return Window(k, k * window_s, (k + 1) * window_s, sampling_rate=sampling_rate)

    current = fresh(0)
    last_t = -math.inf
    started = False
    for e in samples:
        if e.t < last_t:
            raise OrderingError(f"sample at t={e.t} arrived after t={last_t}")
        last_t = e.t
        started = True
        k = math.floor(e.t / window_s)
        while current.index < k:
            yield current
            current = fresh(current.index + 1)
        current.add(e, switch_id)
    if started or n_windows:
        yield current
    for k in range(current.index + 1, n_windows or 0):
        yield fresh(k)


def window_datagrams(window_index: int, samples: Iterable[PacketEvent], agent_ip: str,
                     sampling_rate: int) -> list[SampledDatagram]:
    """Datagrams flushed for one window; always at least one."""
    heads = [SampleHeader(e.src_ip, e.dst_ip, e.src_port, e.dst_port, e.protocol, e.size_bytes)
             for e in samples]
    chunks = [heads[i:i + MAX_SAMPLES] for i in range(0, len(heads), MAX_SAMPLES)] or [[]]
    return [SampledDatagram(agent_ip, window_index, sampling_rate, tuple(c)) for c in chunks]


def replay_events(datagrams: Iterable[SampledDatagram], window_s: float) -> Iterator[PacketEvent]:
    """Turn replayed datagrams back into events stamped at their window start."""
    last = -1
    for d in datagrams:
        if d.sequence < last:
            raise OrderingError(f"datagram sequence {d.sequence} after {last}")
        last = d.sequence
        t = d.sequence * window_s
        for s in d.samples:
            yield PacketEvent(t, s.src_ip, s.dst_ip, s.src_port, s.dst_port, s.protocol,
                              s.size_bytes, "replay")
