"""Hellinger-distance change detection with entropy confirmation.

Each protocol class is watched independently. For every window the
distribution of packets over hashed source addresses is compared with the
previous window's; a Hellinger distance above an EWMA-based dynamic
threshold marks a candidate anomaly, which is confirmed when the
source-address entropy has moved away from its baseline. Confirmed
anomalies are attributed to sources by greedy entropy peeling.
"""

from __future__ import annotations

import dataclasses
import hashlib
import ipaddress
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

import numpy as np

from emm.config import DetectorParams
from emm.errors import DimensionError
from emm.sflow import Window
from emm.traffic_sim import Protocol


@lru_cache(maxsize=65536)
def bucket_of(ip: str, n_buckets: int) -> int:
    digest = hashlib.blake2b(ipaddress.IPv4Address(ip).packed, digest_size=8).digest()
    return int.from_bytes(digest, "big") % n_buckets


@lru_cache(maxsize=65536)
def _ip_value(ip: str) -> int:
    return int(ipaddress.IPv4Address(ip))


@dataclass(frozen=True)
class Distribution:
    buckets: np.ndarray
    support_kind: str = "SourceHash"

    @property
    def B(self) -> int:
        return len(self.buckets)

    @classmethod
    def uniform(cls, n_buckets: int) -> Distribution:
        return cls(np.full(n_buckets, 1.0 / n_buckets))


def distribution_from_counts(counts: Mapping[str, float], n_buckets: int = 64) -> Distribution:
    if n_buckets < 2:
        raise ValueError("need at least 2 buckets")
    hist = np.zeros(n_buckets)
    for ip, c in counts.items():
        hist[bucket_of(ip, n_buckets)] += c
    total = hist.sum()
    if total <= 0:
        return Distribution.uniform(n_buckets)
    return Distribution(hist / total)


def build_distribution(w: Window, protocol: Protocol, B: int = 64) -> Distribution:
    return distribution_from_counts(w.source_counts(protocol), B)


def hellinger_distance(P: Distribution, Q: Distribution) -> float:
    if P.B != Q.B:
        raise DimensionError(f"bucket counts differ: {P.B} vs {Q.B}")
    diff = np.sqrt(P.buckets) - np.sqrt(Q.buckets)
    h2 = 0.5 * float(np.dot(diff, diff))
    return min(1.0, max(0.0, math.sqrt(max(h2, 0.0))))


def shannon_entropy(counts: Mapping[str, float]) -> float:
    """Entropy in bits of the empirical distribution given by ``counts``."""
    values = [c for c in counts.values() if c > 0]
    total = math.fsum(values)
    if len(values) <= 1:
        return 0.0
    h = -math.fsum((c / total) * math.log2(c / total) for c in values)
    return max(0.0, h)


@dataclass(frozen=True)
class ThresholdState:
    mean: float = 0.0
    var: float = 0.0
    alpha: float = 0.2
    k: float = 3.0
    warmup_remaining: int = 10
    floor: float = 0.05

    def threshold(self) -> float:
        return max(self.floor, self.mean + self.k * math.sqrt(self.var))

    @classmethod
    def from_params(cls, p: DetectorParams) -> ThresholdState:
        return cls(alpha=p.alpha, k=p.k, warmup_remaining=p.warmup, floor=p.floor)


def update_threshold(s: ThresholdState, hd: float) -> ThresholdState:
    a = s.alpha
    return dataclasses.replace(
        s,
        mean=(1 - a) * s.mean + a * hd,
        var=(1 - a) * s.var + a * (hd - s.mean) ** 2,
        warmup_remaining=max(0, s.warmup_remaining - 1),
    )


@dataclass(frozen=True)
class EntropyReport:
    """Entropy baseline for one protocol stream.

    ``source_profile`` holds the smoothed per-window packet count of each
    source seen in normal windows; ``updates`` counts the windows folded
    into the baseline so far.
    """

    baseline_entropy_bits: float = 0.0
    current_entropy_bits: float = 0.0
    epsilon_bits: float = 0.3
    source_profile: Mapping[str, float] = field(default_factory=dict)
    updates: int = 0
    excess_sigma: float = 3.0

    def within_band(self, entropy_bits: float) -> bool:
        return abs(entropy_bits - self.baseline_entropy_bits) <= self.epsilon_bits


def update_entropy_baseline(r: EntropyReport, counts: Mapping[str, float],
                            alpha: float) -> EntropyReport:
    h = shannon_entropy(counts)
    if r.updates == 0:
        return dataclasses.replace(r, baseline_entropy_bits=h, current_entropy_bits=h,
                                   source_profile=dict(counts), updates=1)
    profile = {}
    for ip in set(r.source_profile) | set(counts):
        v = (1 - alpha) * r.source_profile.get(ip, 0.0) + alpha * counts.get(ip, 0.0)
        if v >= 1e-3:
            profile[ip] = v
    return dataclasses.replace(
        r,
        baseline_entropy_bits=(1 - alpha) * r.baseline_entropy_bits + alpha * h,
        current_entropy_bits=h,
        source_profile=profile,
        updates=r.updates + 1,
    )


def identify_attackers(counts: Mapping[str, float], baseline: EntropyReport) -> tuple[str, ...]:
    """Peel off sources until the remaining traffic looks like the baseline.

    Sources are removed in order of their excess over the baseline profile
    (plain count when the profile is empty; lower address first on ties)
    until the remainder's entropy is back within ``epsilon_bits`` of the
    baseline, or half of the sources have been removed. A source is only a
    candidate if it exceeds its expected count by more than
    ``excess_sigma`` Poisson standard deviations. Returned in removal order.
    """
    remaining = {ip: c for ip, c in counts.items() if c > 0}
    if not remaining or baseline.within_band(shannon_entropy(remaining)):
        return ()
    profile = baseline.source_profile
    cap = math.ceil(len(remaining) / 2)

    def expected(ip: str) -> float:
        return profile.get(ip, 0.0)

    candidates = [ip for ip, c in remaining.items()
                  if c > expected(ip) + baseline.excess_sigma * math.sqrt(expected(ip))]
    candidates.sort(key=lambda ip: (-(remaining[ip] - expected(ip)), _ip_value(ip)))
    removed: list[str] = []
    for ip in candidates[:cap]:
        del remaining[ip]
        removed.append(ip)
        if baseline.within_band(shannon_entropy(remaining)):
            break
    return tuple(removed)


@dataclass(frozen=True)
class Verdict:
    window_index: int
    protocol: Protocol
    hd: float
    threshold: float
    anomalous: bool
    attackers: tuple[str, ...] = ()
    entropy_bits: float = 0.0

    def __post_init__(self):
        if self.anomalous and not self.hd > self.threshold:
            raise ValueError("anomalous verdict requires hd > threshold")
        if self.attackers and not self.anomalous:
            raise ValueError("attackers reported on a non-anomalous verdict")


def evaluate_window(prev: Distribution | None, cur: Distribution, s: ThresholdState,
                    counts: Mapping[str, float], entropy: EntropyReport, *,
                    window_index: int = 0,
                    protocol: Protocol = Protocol.TCP
                    ) -> tuple[Verdict, ThresholdState, EntropyReport]:
    """One detection step; returns the verdict and the successor states.

    Threshold and entropy baseline are frozen on any window whose distance
    exceeds the threshold, so a flood cannot drag the baseline towards
    itself. The verdict is anomalous only when the entropy has also left
    its band and at least one source exceeds its expected count.
    """
    h_cur = shannon_entropy(counts)
    if prev is None:
        entropy = update_entropy_baseline(entropy, counts, s.alpha)
        return Verdict(window_index, protocol, 0.0, s.threshold(), False,
                       entropy_bits=h_cur), s, entropy
    hd = hellinger_distance(prev, cur)
    thr = s.threshold()
    if s.warmup_remaining > 0 or not hd > thr:
        entropy = update_entropy_baseline(entropy, counts, s.alpha)
        return (Verdict(window_index, protocol, hd, thr, False, entropy_bits=h_cur),
                update_threshold(s, hd), entropy)
    entropy = dataclasses.replace(entropy, current_entropy_bits=h_cur)
    # a shift with no source in excess (e.g. a host falling silent) is not a flood
    shifted = bool(counts) and not entropy.within_band(h_cur)
    attackers = identify_attackers(counts, entropy) if shifted else ()
    return Verdict(window_index, protocol, hd, thr, bool(attackers), attackers, h_cur), s, entropy


class ProtocolDetector:
    """Threads detector state across the windows of one protocol stream."""

    def __init__(self, protocol: Protocol, params: DetectorParams | None = None):
        self.protocol = protocol
        self.params = params or DetectorParams()
        self.state = ThresholdState.from_params(self.params)
        self.entropy = EntropyReport(epsilon_bits=self.params.epsilon_bits,
                                     excess_sigma=self.params.excess_sigma)
        self.prev: Distribution | None = None

    def step(self, w: Window) -> Verdict:
        counts = w.source_counts(self.protocol)
        cur = distribution_from_counts(counts, self.params.buckets)
        verdict, self.state, self.entropy = evaluate_window(
            self.prev, cur, self.state, counts, self.entropy,
            window_index=w.index, protocol=self.protocol)
        self.prev = cur
        return verdict


class Detector:
    """Independent detectors for TCP, UDP and ICMP."""

    def __init__(self, params: DetectorParams | None = None,
                 protocols: tuple[Protocol, ...] = (Protocol.TCP, Protocol.UDP, Protocol.ICMP)):
        self.streams = {p: ProtocolDetector(p, params) for p in protocols}

    def evaluate(self, w: Window) -> list[Verdict]:
        return [d.step(w) for d in self.streams.values()]
