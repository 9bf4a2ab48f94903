"""Decision engine, OpenFlow-style drop rules, and alerting."""

from __future__ import annotations

import enum
import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol as TypingProtocol

from emm.detector import Verdict
from emm.errors import AlertDeliveryError, OrderingError
from emm.traffic_sim import PacketEvent


class Action(enum.Enum):
    FORWARD = "Forward"
    DROPPED = "Dropped"
    SEND_TO_VERIFIER = "SendToVerifier"


@dataclass(frozen=True)
class FlowRule:
    match_src_ip: str
    installed_at_s: float
    duration_s: float
    origin: int
    action: str = "Drop"

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError("rule duration must be > 0")

    @property
    def expires_at_s(self) -> float:
        return self.installed_at_s + self.duration_s

    def active_at(self, t: float) -> bool:
        return self.installed_at_s <= t < self.expires_at_s


@dataclass
class PacketStats:
    dropped: int = 0
    forwarded: int = 0

    @property
    def offered(self) -> int:
        return self.dropped + self.forwarded


class FlowTable:
    """Per-source drop rules plus per-source packet counters.

    Rules are immutable and replaced wholesale, so a reader never sees a
    half-updated rule; counter updates go through a lock.
    """

    def __init__(self):
        self.rules: dict[str, FlowRule] = {}
        self.stats: dict[str, PacketStats] = {}
        self.clock = -math.inf
        self._lock = threading.Lock()

    def active_rules(self, t: float) -> list[FlowRule]:
        return [r for r in self.rules.values() if r.active_at(t)]

    def record(self, ip: str, dropped: bool) -> None:
        with self._lock:
            st = self.stats.get(ip)
            if st is None:
                st = self.stats[ip] = PacketStats()
            if dropped:
                st.dropped += 1
            else:
                st.forwarded += 1


def decide(v: Verdict, table: FlowTable, cfg_block_s: float, now_s: float,
           install_delay_s: float = 0.0) -> list[FlowRule]:
    """Install or refresh one drop rule per attacker named in ``v``.

    A source that already has a rule gets a replacement that starts now, so
    a repeat offence extends the block instead of stacking rules.
    """
    if not cfg_block_s > 0:
        raise ValueError("cfg_block_s must be > 0")
    if not v.anomalous:
        return []
    out = []
    for ip in v.attackers:
        rule = FlowRule(ip, now_s + install_delay_s, cfg_block_s, v.window_index)
        table.rules[ip] = rule
        out.append(rule)
    return out


def filter_packet(table: FlowTable, e: PacketEvent) -> Action:
    rule = table.rules.get(e.src_ip)
    dropped = rule is not None and rule.active_at(e.t)
    table.record(e.src_ip, dropped)
    return Action.DROPPED if dropped else Action.FORWARD


def expire_rules(table: FlowTable, now_s: float) -> FlowTable:
    if now_s < table.clock:
        raise OrderingError(f"expiry clock moved backwards: {now_s} < {table.clock}")
    table.clock = now_s
    for ip in [ip for ip, r in table.rules.items() if r.expires_at_s <= now_s]:
        del table.rules[ip]
    return table


class AlertKind(enum.Enum):
    PERIODIC_UPDATE = "PeriodicUpdate"
    ATTACK_NOTIFICATION = "AttackNotification"


@dataclass(frozen=True)
class Alert:
    kind: AlertKind
    window_index: int
    attackers: tuple[str, ...]
    hd: float
    timestamp_s: float

    def __post_init__(self):
        if self.kind is AlertKind.ATTACK_NOTIFICATION and not self.attackers:
            raise ValueError("attack notification without attackers")

    def to_json(self) -> str:
        return json.dumps({
            "kind": self.kind.value,
            "window_index": self.window_index,
            "attackers": list(self.attackers),
            "hd": self.hd,
            "timestamp_s": self.timestamp_s,
        })


class Notifier(TypingProtocol):
    def send(self, alert: Alert) -> None: ...


@dataclass
class MemorySink:
    alerts: list[Alert] = field(default_factory=list)

    def send(self, alert: Alert) -> None:
        self.alerts.append(alert)


class FileAlertSink:
    """Append alerts to a newline-delimited JSON log."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def send(self, alert: Alert) -> None:
        try:
            with self.path.open("a") as fh:
                fh.write(alert.to_json() + "\n")
        except OSError as exc:
            raise AlertDeliveryError(f"cannot write alert log {self.path}: {exc}") from exc


@dataclass
class EmailStub:
    """Stand-in for an SMTP transport; keeps the messages it would send."""

    recipients: tuple[str, ...] = ("soc@example.invalid",)
    outbox: list[tuple[str, str]] = field(default_factory=list)

    def send(self, alert: Alert) -> None:
        subject = f"[EMM] {alert.kind.value} window {alert.window_index}"
        for rcpt in self.recipients:
            self.outbox.append((rcpt, subject))


class AlertingEngine:
    """Immediate attack notifications plus rate-limited periodic updates.

    Anomalies that name no attacker ride along with the next periodic
    update. Delivery failures are recorded in ``errors`` and never
    propagate into mitigation.
    """

    def __init__(self, sink: Notifier, update_period_s: float = 60.0):
        self.sink = sink
        self.update_period_s = update_period_s
        self.last_update_s = -math.inf
        self.errors: list[str] = []
        self.sent: list[Alert] = []

    def emit_alert(self, v: Verdict, timestamp_s: float) -> Alert | None:
        if v.anomalous and v.attackers:
            alert = Alert(AlertKind.ATTACK_NOTIFICATION, v.window_index, v.attackers, v.hd,
                          timestamp_s)
        elif timestamp_s - self.last_update_s >= self.update_period_s:
            self.last_update_s = timestamp_s
            alert = Alert(AlertKind.PERIODIC_UPDATE, v.window_index, (), v.hd, timestamp_s)
        else:
            return None
        self.sent.append(alert)
        try:
            self.sink.send(alert)
        except (AlertDeliveryError, OSError) as exc:
            self.errors.append(str(exc))
        return alert
