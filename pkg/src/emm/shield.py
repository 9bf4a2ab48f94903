"""EDoS-Shield baseline: virtual firewall lists fed by a Turing-test verifier.

The graphical Turing test is an oracle on the host's role: human clients
pass, bots fail. Passing puts the address on the whitelist, failing on the
blacklist. Whitelisted addresses are never inspected again, which is what
the whitelisted-attacker scenario exploits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from emm.mitigator import Action
from emm.traffic_sim import HostProfile, PacketEvent


@dataclass
class FirewallLists:
    whitelist: set[str] = field(default_factory=set)
    blacklist: set[str] = field(default_factory=set)

    def __post_init__(self):
        if self.whitelist & self.blacklist:
            raise ValueError("an address cannot be both white- and blacklisted")

    def is_listed(self, ip: str) -> bool:
        return ip in self.whitelist or ip in self.blacklist


@dataclass(frozen=True)
class VerifierOutcome:
    ip: str
    passed: bool


def gtt_verify(ip: str, profile: HostProfile, lists: FirewallLists) -> VerifierOutcome:
    if lists.is_listed(ip):
        raise ValueError(f"{ip} is already listed")
    passed = not profile.role.is_attacker
    (lists.whitelist if passed else lists.blacklist).add(ip)
    return VerifierOutcome(ip, passed)


def firewall_filter(lists: FirewallLists, e: PacketEvent) -> Action:
    if e.src_ip in lists.whitelist:
        return Action.FORWARD
    if e.src_ip in lists.blacklist:
        return Action.DROPPED
    return Action.SEND_TO_VERIFIER


class EdosShield:
    """Stateful firewall + verifier for one scenario run.

    An unknown address triggers one verification. Its result is applied to
    the lists ``verify_delay_windows`` windows later; until then the
    address's packets stay with the verifier and never reach the victim.
    """

    def __init__(self, profiles: Mapping[str, HostProfile], prewhitelisted: Iterable[str] = (),
                 verify_delay_windows: int = 1):
        self.profiles = dict(profiles)
        self.lists = FirewallLists(whitelist=set(prewhitelisted))
        self.verify_delay_windows = verify_delay_windows
        self.pending: dict[str, tuple[int, HostProfile]] = {}
        self.verifications: list[VerifierOutcome] = []
        self.window = 0

    def begin_window(self, k: int) -> None:
        self.window = k
        for ip, (ready, profile) in list(self.pending.items()):
            if ready <= k:
                del self.pending[ip]
                self.verifications.append(gtt_verify(ip, profile, self.lists))

    def filter(self, e: PacketEvent) -> Action:
        action = firewall_filter(self.lists, e)
        if action is not Action.SEND_TO_VERIFIER or e.src_ip in self.pending:
            return action
        profile = self.profiles[e.origin]
        if self.verify_delay_windows == 0:
            self.verifications.append(gtt_verify(e.src_ip, profile, self.lists))
        else:
            self.pending[e.src_ip] = (self.window + self.verify_delay_windows, profile)
        return Action.SEND_TO_VERIFIER
