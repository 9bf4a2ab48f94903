"""Regenerate the scenario files shipped in src/emm/scenarios/.

Rates are testbed-scale; each scenario's ``scale`` brings them to desk size.
"""

from pathlib import Path

from emm.config import ScenarioConfig, dump_scenario
from emm.traffic_sim import HostRole, http_flood_profile, udp_flood_profile

OUT = Path(__file__).resolve().parents[1] / "src" / "emm" / "scenarios"
VICTIM = "192.168.200.53"
NORMAL_PPS = 48_000
ATTACK_PPS = 184_000
ATTACK_START = 60.0


def legit_http(n_hosts, end_s):
    return http_flood_profile(NORMAL_PPS, 0.0, end_s, n_hosts, role=HostRole.LEGITIMATE_HTTP,
                              first_ip="10.0.0.1", id_prefix="client")


def attack_http(n_hosts, end_s):
    return http_flood_profile(ATTACK_PPS, ATTACK_START, end_s, n_hosts, first_ip="10.0.1.1")


def scenarios():
    yield ScenarioConfig(
        name="uc1_http_flood", duration_s=300, window_s=1, seed=1, victim_ip=VICTIM,
        link_capacity_pps=300_000, scale=1000,
        hosts=legit_http(5, 300) + attack_http(1, 300),
    )
    normal_udp = [
        udp_flood_profile(2e6, 0.0, 300, role=HostRole.LEGITIMATE_UDP, host_id=f"iperf{i}",
                          ip=f"10.0.0.{i + 1}", src_port=40000 + i)
        for i in range(5)
    ]
    yield ScenarioConfig(
        name="uc2_udp_flood", duration_s=300, window_s=1, seed=1, victim_ip=VICTIM,
        link_capacity_pps=10_000, scale=10,
        hosts=normal_udp + [udp_flood_profile(20e6, ATTACK_START, 400, host_id="udpbot",
                                              ip="10.0.1.1")],
    )
    cmp_hosts = legit_http(1, 3600) + attack_http(5, 3600)
    yield ScenarioConfig(
        name="cmp_random_host", duration_s=3600, window_s=1, seed=1, victim_ip=VICTIM,
        link_capacity_pps=300_000, scale=1000, hosts=cmp_hosts,
    )
    yield ScenarioConfig(
        name="cmp_whitelisted", duration_s=3600, window_s=1, seed=1, victim_ip=VICTIM,
        link_capacity_pps=300_000, scale=1000, hosts=cmp_hosts,
        prewhitelisted_ips=tuple(h.ip for h in cmp_hosts),
    )
    yield ScenarioConfig(
        name="clean_baseline", duration_s=300, window_s=1, seed=1, victim_ip=VICTIM,
        link_capacity_pps=300_000, scale=1000, hosts=legit_http(5, 300),
    )


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for cfg in scenarios():
        dump_scenario(cfg, OUT / f"{cfg.name}.json")
        print(f"wrote {cfg.name}.json ({len(cfg.hosts)} hosts)")
