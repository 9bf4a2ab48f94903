"""Scenario runner tying the simulator, ingest, detector and mitigation together.

Per window the order is: expire rules, filter offered packets through the
active mechanism, let the EMM detector look at the forwarded traffic
(monitoring sits behind the switch flow table), install any new rules at the
window's end, then clip what remains to the victim link capacity.
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from emm.config import ResourceModel, ScenarioConfig
from emm.detector import Detector, Verdict
from emm.errors import ComparisonError, ConfigError
from emm.mitigator import (Action, Alert, AlertingEngine, FlowTable, MemorySink, Notifier,
                           decide, expire_rules, filter_packet)
from emm.sflow import (Window, read_sflow_file, replay_events, sample_packets,
                       window_datagrams, write_sflow_file)
from emm.shield import EdosShield
from emm.traffic_sim import PacketEvent, generate_events

CSV_HEADER = ["window", "delivered_pps", "delivered_bps", "cpu_pct", "mem_pct",
              "active_rules", "anomalous"]


class Mechanism(str, enum.Enum):
    EMM = "emm"
    SHIELD = "shield"
    NONE = "none"


@dataclass
class WindowState:
    """Raw per-window accounting before the resource model is applied."""

    index: int
    window_s: float
    scale: float
    offered: int = 0
    delivered: int = 0
    delivered_bytes: int = 0
    mechanism_dropped: int = 0
    clipped: int = 0
    active_flows: int = 0
    active_rules: int = 0
    anomalous: bool = False


@dataclass(frozen=True)
class MetricsSample:
    window_index: int
    delivered_pps: float
    delivered_bps: float
    cpu_pct: float
    mem_pct: float
    active_rules: int
    verdict_anomalous: bool
    offered_pps: float = 0.0
    mechanism_dropped: int = 0
    clipped: int = 0


def compute_metrics(ws: WindowState, model: ResourceModel | None = None) -> MetricsSample:
    model = model or ResourceModel()
    pps = ws.delivered / ws.window_s
    kpps_testbed = pps * ws.scale / 1000.0
    return MetricsSample(
        window_index=ws.index,
        delivered_pps=pps,
        delivered_bps=ws.delivered_bytes * 8 / ws.window_s,
        cpu_pct=model.cpu_pct(kpps_testbed),
        mem_pct=model.mem_pct(ws.active_flows),
        active_rules=ws.active_rules,
        verdict_anomalous=ws.anomalous,
        offered_pps=ws.offered / ws.window_s,
        mechanism_dropped=ws.mechanism_dropped,
        clipped=ws.clipped,
    )


@dataclass
class TrafficTally:
    offered: int = 0
    delivered: int = 0
    mechanism_dropped: int = 0
    clipped: int = 0


@dataclass
class RunReport:
    scenario_name: str
    mechanism: Mechanism
    samples: list[MetricsSample]
    detection_latency_windows: int | None
    blocked_ips: frozenset[str]
    false_positive_ips: frozenset[str]
    fingerprint: str = ""
    seed: int = 0
    window_s: float = 1.0
    monitor_interval_s: float = 60.0
    attack_onset_window: int | None = None
    first_detection_window: int | None = None
    anomalous_verdicts: list[Verdict] = field(default_factory=list)
    alerts: list[Alert] = field(default_factory=list)
    alert_errors: list[str] = field(default_factory=list)
    attack: TrafficTally = field(default_factory=TrafficTally)
    attack_after_detection: TrafficTally = field(default_factory=TrafficTally)
    legitimate: TrafficTally = field(default_factory=TrafficTally)
    legit_after_block: TrafficTally = field(default_factory=TrafficTally)

    @property
    def anomalous_windows(self) -> list[int]:
        return sorted({v.window_index for v in self.anomalous_verdicts})


class _ActiveFlows:
    """Distinct 5-tuples delivered within a trailing idle timeout."""

    def __init__(self, idle_s: float):
        self.idle_s = idle_s
        self.last: dict[tuple, float] = {}
        self.order: deque[tuple[float, tuple]] = deque()

    def add(self, e: PacketEvent) -> None:
        key = (e.src_ip, e.dst_ip, e.src_port, e.dst_port, e.protocol)
        self.last[key] = e.t
        self.order.append((e.t, key))

    def count(self, now_s: float) -> int:
        cutoff = now_s - self.idle_s
        while self.order and self.order[0][0] < cutoff:
            t, key = self.order.popleft()
            if self.last.get(key) == t:
                del self.last[key]
        return len(self.last)


def _windows(events: Iterable[PacketEvent], window_s: float, n: int) -> Iterator[list[PacketEvent]]:
    grouped = itertools.groupby(events, key=lambda e: math.floor(e.t / window_s))
    pending = next(grouped, None)
    for k in range(n):
        while pending is not None and pending[0] < k:
            pending = next(grouped, None)
        if pending is not None and pending[0] == k:
            yield list(pending[1])
            pending = next(grouped, None)
        else:
            yield []


def _derived_seed(seed: int, *salt: int) -> int:
    return int(np.random.SeedSequence((seed, *salt)).generate_state(1, np.uint64)[0])


def run_scenario(cfg: ScenarioConfig, mechanism: Mechanism | str, *,
                 events: Iterable[PacketEvent] | None = None,
                 estimate_multiplier: int = 1,
                 alert_sink: Notifier | None = None) -> RunReport:
    """Execute one scenario window by window.

    ``events`` overrides the simulator (used for ``.sflow5`` replay, whose
    events are already samples; ``estimate_multiplier`` then carries the
    exporter's sampling rate).
    """
    try:
        mechanism = Mechanism(mechanism)
    except ValueError as exc:
        raise ConfigError(f"unknown mechanism {mechanism!r}") from exc
    profiles = {h.host_id: h for h in cfg.hosts}
    if events is not None and mechanism is Mechanism.SHIELD:
        raise ConfigError("the shield baseline needs host profiles and cannot run on a replay")
    stream = generate_events(cfg) if events is None else events

    w, n = cfg.window_s, cfg.n_windows
    attack_roles = {h.host_id for h in cfg.hosts if h.role.is_attacker}
    legit_ips = cfg.legitimate_ips
    onset_s = cfg.attack_onset_s
    onset_window = math.floor(onset_s / w) if onset_s is not None else None

    table = FlowTable()
    shield = (EdosShield(profiles, cfg.prewhitelisted_ips, cfg.verify_delay_windows)
              if mechanism is Mechanism.SHIELD else None)
    detector = Detector(cfg.detector) if mechanism is Mechanism.EMM else None
    sink = alert_sink if alert_sink is not None else MemorySink()
    alerting = AlertingEngine(sink, cfg.update_period_s)
    clip_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xC1)))
    flows = _ActiveFlows(cfg.resources.flow_idle_s)
    cap = cfg.capacity_per_window
    sampling = cfg.sampling_rate if events is None else 1

    report = RunReport(cfg.name, mechanism, [], None, frozenset(), frozenset(),
                       fingerprint=cfg.fingerprint(), seed=cfg.seed, window_s=w,
                       monitor_interval_s=cfg.monitor_interval_s,
                       attack_onset_window=onset_window)
    blocked: set[str] = set()
    first_detection: int | None = None
    first_block: int | None = None

    for k, offered in enumerate(_windows(stream, w, n)):
        now = k * w
        expire_rules(table, now)
        if shield is not None:
            shield.begin_window(k)
        ws = WindowState(k, w, cfg.scale, offered=len(offered))
        forwarded: list[PacketEvent] = []
        dropped: list[PacketEvent] = []
        for e in offered:
            if mechanism is Mechanism.EMM:
                action = filter_packet(table, e)
            elif shield is not None:
                action = shield.filter(e)
            else:
                action = Action.FORWARD
            (forwarded if action is Action.FORWARD else dropped).append(e)
        ws.mechanism_dropped = len(dropped)

        if detector is not None:
            mon = Window(k, now, now + w, sampling_rate=sampling * estimate_multiplier)
            for e in sample_packets(forwarded, sampling, _derived_seed(cfg.seed, 0x5F, k)):
                mon.add(e, cfg.switch_id)
            for v in detector.evaluate(mon):
                if v.anomalous:
                    report.anomalous_verdicts.append(v)
                    ws.anomalous = True
                    if first_detection is None and (onset_window is None or k >= onset_window):
                        first_detection = k
                rules = decide(v, table, cfg.block_duration_s, now + w, cfg.rule_install_delay_s)
                if rules and first_block is None:
                    first_block = k
                blocked.update(r.match_src_ip for r in rules)
                alerting.emit_alert(v, now + w)

        if len(forwarded) > cap:
            keep = np.sort(clip_rng.choice(len(forwarded), size=cap, replace=False))
            delivered = [forwarded[i] for i in keep.tolist()]
        else:
            delivered = forwarded
        delivered_set = set(map(id, delivered))
        ws.clipped = len(forwarded) - len(delivered)
        ws.delivered = len(delivered)
        ws.delivered_bytes = sum(e.size_bytes for e in delivered)
        for e in delivered:
            flows.add(e)
        ws.active_flows = flows.count(now + w)
        if shield is not None:
            ws.active_rules = len(shield.lists.blacklist)
        else:
            ws.active_rules = len(table.active_rules(now + w))
        report.samples.append(compute_metrics(ws, cfg.resources))

        dropped_ids = set(map(id, dropped))
        after_detection = first_detection is not None and k > first_detection
        after_block = first_block is not None and k > first_block
        for e in offered:
            is_attack = e.origin in attack_roles
            tallies = [report.attack] if is_attack else [report.legitimate]
            if is_attack and after_detection:
                tallies.append(report.attack_after_detection)
            if not is_attack and after_block:
                tallies.append(report.legit_after_block)
            for tally in tallies:
                tally.offered += 1
                if id(e) in delivered_set:
                    tally.delivered += 1
                elif id(e) in dropped_ids:
                    tally.mechanism_dropped += 1
                else:
                    tally.clipped += 1

    if shield is not None:
        blocked = set(shield.lists.blacklist)
    report.blocked_ips = frozenset(blocked)
    report.false_positive_ips = frozenset(blocked & legit_ips)
    report.first_detection_window = first_detection
    if first_detection is not None and onset_window is not None:
        report.detection_latency_windows = first_detection - onset_window
    report.alerts = list(alerting.sent)
    report.alert_errors = list(alerting.errors)
    return report


def run_replay(cfg: ScenarioConfig, path: str | Path, mechanism: Mechanism | str = "emm",
               **kw) -> RunReport:
    datagrams = read_sflow_file(path)
    rate = datagrams[0].sampling_rate if datagrams else 1
    return run_scenario(cfg, mechanism, events=replay_events(datagrams, cfg.window_s),
                        estimate_multiplier=rate, **kw)


def export_sflow(cfg: ScenarioConfig, path: str | Path, agent_ip: str = "192.0.2.1") -> int:
    """Sample the unmitigated scenario traffic and write it as a ``.sflow5`` file."""
    sampled = sample_packets(generate_events(cfg), cfg.sampling_rate,
                             _derived_seed(cfg.seed, 0x5F))
    datagrams = []
    for k, evs in enumerate(_windows(sampled, cfg.window_s, cfg.n_windows)):
        datagrams.extend(window_datagrams(k, evs, agent_ip, cfg.sampling_rate))
    write_sflow_file(path, datagrams)
    return len(datagrams)


def render_csv(r: RunReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in r.samples:
        writer.writerow([s.window_index, f"{s.delivered_pps:.6f}", f"{s.delivered_bps:.6f}",
                         f"{s.cpu_pct:.6f}", f"{s.mem_pct:.6f}", s.active_rules,
                         int(s.verdict_anomalous)])
    return buf.getvalue()


def write_csv(r: RunReport, path: str | Path) -> None:
    path = Path(path)
    try:
        path.write_text(render_csv(r))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


FEATURE_MATRIX = [
    {"technique": "EDoS-Shield", "methodology": "Virtual firewall and authentication",
     "mitigation_against": "HTTP attacks", "third_party_auth": True,
     "connection_setup_delay": True, "additional_overhead": True},
    {"technique": "sPoW", "methodology": "Packet filtering based on cryptographic puzzles",
     "mitigation_against": "HTTP attacks", "third_party_auth": True,
     "connection_setup_delay": True, "additional_overhead": True},
    {"technique": "In-Cloud Scrubber", "methodology": "Puzzle generation and verification",
     "mitigation_against": "HTTP attacks", "third_party_auth": True,
     "connection_setup_delay": True, "additional_overhead": True},
    {"technique": "EMM", "methodology": "Packet inspection",
     "mitigation_against": "HTTP, UDP, ICMP attacks", "third_party_auth": False,
     "connection_setup_delay": False, "additional_overhead": False},
]

RATIO_METRICS = ("delivered_pps", "delivered_bps", "cpu_pct", "mem_pct")


def _ratio(num: float, den: float) -> float | None:
    if den == 0:
        return 1.0 if num == 0 else None
    return num / den


def monitored_series(values: list[float], per_sample: int) -> list[float]:
    """Mean over consecutive blocks of ``per_sample`` windows (a monitoring tool's view)."""
    per_sample = max(1, per_sample)
    return [float(np.mean(values[i:i + per_sample])) for i in range(0, len(values), per_sample)]


@dataclass
class ComparisonSummary:
    scenario_name: str
    seed: int
    monitor_windows: int
    series: dict[str, dict[str, list[float]]]
    peak_ratio: dict[str, float | None]
    mean_ratio: dict[str, float | None]
    window_peak_ratio: dict[str, float | None]
    detection_latency_windows: int | None
    emm_blocked_ips: list[str]
    shield_blocked_ips: list[str]
    features: list[dict] = field(default_factory=lambda: [dict(r) for r in FEATURE_MATRIX])

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario_name,
            "seed": self.seed,
            "monitor_windows": self.monitor_windows,
            "peak_ratio_shield_over_emm": self.peak_ratio,
            "mean_ratio_shield_over_emm": self.mean_ratio,
            "window_peak_ratio_shield_over_emm": self.window_peak_ratio,
            "emm_detection_latency_windows": self.detection_latency_windows,
            "emm_blocked_ips": self.emm_blocked_ips,
            "shield_blocked_ips": self.shield_blocked_ips,
            "feature_matrix": self.features,
            "series": self.series,
        }


def compare_mechanisms(r_emm: RunReport, r_shield: RunReport) -> ComparisonSummary:
    """Shield-over-EMM ratios for traffic, CPU and memory.

    Peaks are taken on the monitored series (block means over
    ``monitor_interval_s``); per-window peaks are reported alongside.
    """
    if r_emm.fingerprint != r_shield.fingerprint or len(r_emm.samples) != len(r_shield.samples):
        raise ComparisonError("reports come from different scenarios or seeds")
    per = max(1, int(round(r_emm.monitor_interval_s / r_emm.window_s)))
    series, peak, mean, raw_peak = {}, {}, {}, {}
    for m in RATIO_METRICS:
        e = [getattr(s, m) for s in r_emm.samples]
        sh = [getattr(s, m) for s in r_shield.samples]
        series[m] = {"emm": e, "shield": sh}
        me, ms = monitored_series(e, per), monitored_series(sh, per)
        peak[m] = _ratio(max(ms, default=0.0), max(me, default=0.0))
        mean[m] = _ratio(float(np.mean(sh)) if sh else 0.0, float(np.mean(e)) if e else 0.0)
        raw_peak[m] = _ratio(max(sh, default=0.0), max(e, default=0.0))
    return ComparisonSummary(
        scenario_name=r_emm.scenario_name,
        seed=r_emm.seed,
        monitor_windows=per,
        series=series,
        peak_ratio=peak,
        mean_ratio=mean,
        window_peak_ratio=raw_peak,
        detection_latency_windows=r_emm.detection_latency_windows,
        emm_blocked_ips=sorted(r_emm.blocked_ips),
        shield_blocked_ips=sorted(r_shield.blocked_ips),
    )


def render_summary(summary: ComparisonSummary) -> str:
    return json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n"
