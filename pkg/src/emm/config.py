"""Scenario configuration and its JSON form.

The JSON document uses the dataclass field names verbatim. Unknown keys are
rejected at every nesting level so that typos fail loudly instead of
silently falling back to defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import ipaddress
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from emm.errors import ConfigError
from emm.traffic_sim import HostProfile, HostRole

SCENARIO_DIR = Path(__file__).parent / "scenarios"


@dataclass(frozen=True)
class DetectorParams:
    buckets: int = 64
    alpha: float = 0.2
    k: float = 3.0
    floor: float = 0.05
    warmup: int = 10
    epsilon_bits: float = 0.3
    excess_sigma: float = 3.0

    def __post_init__(self):
        if self.buckets < 2:
            raise ConfigError("detector.buckets must be >= 2")
        if not 0 < self.alpha < 1:
            raise ConfigError("detector.alpha must lie in (0, 1)")
        if not self.k > 0:
            raise ConfigError("detector.k must be > 0")
        if min(self.floor, self.warmup, self.epsilon_bits, self.excess_sigma) < 0:
            raise ConfigError("detector.floor, warmup, epsilon_bits and excess_sigma must be >= 0")


@dataclass(frozen=True)
class ResourceModel:
    """Linear stand-in for victim CPU and memory load.

    CPU grows with delivered traffic expressed in testbed-scale kpps. Memory
    grows with the number of distinct flows delivered within the last
    ``flow_idle_s`` seconds (desk-scale count).
    """

    cpu_base_pct: float = 5.0
    cpu_per_kpps_pct: float = 0.35
    mem_base_pct: float = 20.0
    mem_per_active_flow_pct: float = 0.02
    flow_idle_s: float = 5.0
    cap: float = 100.0

    def __post_init__(self):
        coeffs = (self.cpu_base_pct, self.cpu_per_kpps_pct, self.mem_base_pct,
                  self.mem_per_active_flow_pct)
        if any(c < 0 for c in coeffs):
            raise ConfigError("resource model coefficients must be >= 0")
        if not self.flow_idle_s > 0:
            raise ConfigError("resources.flow_idle_s must be > 0")

    def _clamp(self, x: float) -> float:
        return min(max(x, 0.0), self.cap)

    def cpu_pct(self, delivered_kpps: float) -> float:
        return self._clamp(self.cpu_base_pct + self.cpu_per_kpps_pct * delivered_kpps)

    def mem_pct(self, active_flows: int) -> float:
        return self._clamp(self.mem_base_pct + self.mem_per_active_flow_pct * active_flows)


@dataclass(frozen=True)
class ScenarioConfig:
    duration_s: float
    window_s: float
    seed: int
    hosts: tuple[HostProfile, ...]
    victim_ip: str
    link_capacity_pps: float
    scale: float = 1000.0
    name: str = "scenario"
    sampling_rate: int = 1
    switch_id: str = "s1"
    prewhitelisted_ips: tuple[str, ...] = ()
    verify_delay_windows: int = 1
    block_duration_s: float = 3600.0
    update_period_s: float = 60.0
    rule_install_delay_s: float = 0.0
    monitor_interval_s: float = 60.0
    detector: DetectorParams = field(default_factory=DetectorParams)
    resources: ResourceModel = field(default_factory=ResourceModel)

    def __post_init__(self):
        object.__setattr__(self, "hosts", tuple(self.hosts))
        object.__setattr__(self, "prewhitelisted_ips", tuple(self.prewhitelisted_ips))
        if not self.window_s > 0:
            raise ConfigError("window_s must be > 0")
        if not self.duration_s > 0:
            raise ConfigError("duration_s must be > 0")
        ratio = self.duration_s / self.window_s
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ConfigError("duration_s must be an integer multiple of window_s")
        if not self.link_capacity_pps > 0:
            raise ConfigError("link_capacity_pps must be > 0")
        if not self.scale > 0:
            raise ConfigError("scale must be > 0")
        if int(self.sampling_rate) != self.sampling_rate or self.sampling_rate < 1:
            raise ConfigError("sampling_rate must be an integer >= 1")
        if self.verify_delay_windows < 0:
            raise ConfigError("verify_delay_windows must be >= 0")
        if not self.block_duration_s > 0:
            raise ConfigError("block_duration_s must be > 0")
        if not self.update_period_s > 0 or self.rule_install_delay_s < 0:
            raise ConfigError("update_period_s must be > 0 and rule_install_delay_s >= 0")
        if not self.monitor_interval_s > 0:
            raise ConfigError("monitor_interval_s must be > 0")
        for ip in (self.victim_ip, *self.prewhitelisted_ips):
            try:
                ipaddress.IPv4Address(ip)
            except ValueError as exc:
                raise ConfigError(f"bad IPv4 address {ip!r}") from exc
        seen: dict[str, HostProfile] = {}
        ids = set()
        for h in self.hosts:
            if h.host_id in ids:
                raise ConfigError(f"duplicate host_id {h.host_id!r}")
            ids.add(h.host_id)
            other = seen.get(h.ip)
            if other is not None and not (h.spoofed or other.spoofed):
                raise ConfigError(f"hosts {other.host_id} and {h.host_id} share ip {h.ip} "
                                  "without a spoofing flag")
            seen.setdefault(h.ip, h)

    @property
    def n_windows(self) -> int:
        return int(round(self.duration_s / self.window_s))

    @property
    def capacity_per_window(self) -> int:
        return int(math.floor(self.link_capacity_pps / self.scale * self.window_s))

    @property
    def legitimate_ips(self) -> frozenset[str]:
        return frozenset(h.ip for h in self.hosts if not h.role.is_attacker)

    @property
    def attacker_ips(self) -> frozenset[str]:
        return frozenset(h.ip for h in self.hosts if h.role.is_attacker)

    @property
    def attack_onset_s(self) -> float | None:
        starts = [h.start_s for h in self.hosts if h.role.is_attacker and h.rate_pps > 0]
        return min(starts) if starts else None

    def with_seed(self, seed: int) -> ScenarioConfig:
        return dataclasses.replace(self, seed=int(seed))

    def to_dict(self) -> dict[str, Any]:
        return _jsonable(dataclasses.asdict(self))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, HostRole):
        return obj.value
    return obj


def _strict(cls, data: Any, where: str) -> dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return dict(data)


def config_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    d = _strict(ScenarioConfig, data, "scenario")
    try:
        hosts = []
        for i, h in enumerate(d.get("hosts", [])):
            hd = _strict(HostProfile, h, f"hosts[{i}]")
            hd["role"] = HostRole(hd["role"])
            hosts.append(HostProfile(**hd))
        d["hosts"] = hosts
        if "detector" in d:
            d["detector"] = DetectorParams(**_strict(DetectorParams, d["detector"], "detector"))
        if "resources" in d:
            d["resources"] = ResourceModel(**_strict(ResourceModel, d["resources"], "resources"))
        return ScenarioConfig(**d)
    except (TypeError, KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid scenario: {exc}") from exc


def resolve_scenario_path(name_or_path: str | Path) -> Path:
    """Accept a file path or the bare name of a shipped scenario."""
    p = Path(name_or_path)
    if p.exists():
        return p
    shipped = SCENARIO_DIR / f"{p.name.removesuffix('.json')}.json"
    if shipped.exists():
        return shipped
    return p


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = resolve_scenario_path(path)
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(data)


def dump_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
