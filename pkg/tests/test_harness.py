import json

import pytest

from emm.cli import main
from emm.config import (ResourceModel, config_from_dict, dump_scenario, load_scenario,
                        resolve_scenario_path)
from emm.errors import ComparisonError, ConfigError
from emm.harness import (CSV_HEADER, Mechanism, RunReport, WindowState, compare_mechanisms,
                         compute_metrics, monitored_series, render_summary,
                         run_replay, run_scenario, write_csv, export_sflow)

SHIPPED = ["uc1_http_flood", "uc2_udp_flood", "cmp_random_host", "cmp_whitelisted",
           "clean_baseline"]


def test_metrics_zero_traffic():
    m = compute_metrics(WindowState(index=0, window_s=1.0, scale=1000))
    assert (m.cpu_pct, m.mem_pct, m.delivered_pps, m.delivered_bps) == (5.0, 20.0, 0.0, 0.0)


def test_metrics_arithmetic():
    ws = WindowState(index=3, window_s=1.0, scale=1000, delivered=232, delivered_bytes=232 * 400,
                     active_flows=1000)
    m = compute_metrics(ws)
    assert m.cpu_pct == pytest.approx(5 + 0.35 * 232)
    assert m.cpu_pct == pytest.approx(86.2)
    assert m.mem_pct == pytest.approx(40.0)
    assert m.delivered_bps == 232 * 400 * 8


def test_metrics_clamp():
    ws = WindowState(index=0, window_s=1.0, scale=1000, delivered=10_000, active_flows=10**6)
    m = compute_metrics(ws)
    assert m.cpu_pct == 100.0 and m.mem_pct == 100.0
    assert ResourceModel().cpu_pct(1e9) == 100.0


def empty_report(**kw):
    return RunReport("x", Mechanism.EMM, [], None, frozenset(), frozenset(), **kw)


def test_csv_header_only(tmp_path):
    write_csv(empty_report(), tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == ",".join(CSV_HEADER) + "\n"


def test_csv_unwritable_path_names_path(tmp_path):
    with pytest.raises(OSError, match="nodir"):
        write_csv(empty_report(), tmp_path / "nodir" / "x.csv")


@pytest.fixture(scope="module")
def uc1():
    return load_scenario("uc1_http_flood").with_seed(3)


@pytest.fixture(scope="module")
def uc1_emm(uc1):
    return run_scenario(uc1, "emm")


def test_csv_300_windows_deterministic(tmp_path, uc1, uc1_emm):
    write_csv(uc1_emm, tmp_path / "a.csv")
    write_csv(run_scenario(uc1, "emm"), tmp_path / "b.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert len(lines) == 301
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_conservation_per_window(uc1, uc1_emm):
    for s in uc1_emm.samples:
        offered = round(s.offered_pps * uc1.window_s)
        delivered = round(s.delivered_pps * uc1.window_s)
        assert offered == delivered + s.mechanism_dropped + s.clipped
    t = uc1_emm.attack
    assert t.offered == t.delivered + t.mechanism_dropped + t.clipped


def test_uc1_end_to_end(uc1, uc1_emm):
    assert uc1_emm.blocked_ips == {"10.0.1.1"}
    assert not uc1_emm.false_positive_ips
    assert uc1_emm.detection_latency_windows is not None
    assert uc1_emm.detection_latency_windows <= 3
    assert uc1_emm.samples[-1].active_rules == 1
    assert all(not s.verdict_anomalous for s in uc1_emm.samples[:uc1_emm.attack_onset_window])


@pytest.mark.parametrize("name", SHIPPED)
def test_zero_collateral_damage(name):
    cfg = load_scenario(name)
    if cfg.duration_s > 600:
        pytest.skip("long comparison scenarios are covered by the acceptance suite")
    r = run_scenario(cfg, "emm")
    assert not r.false_positive_ips
    assert r.legit_after_block.mechanism_dropped == 0
    assert r.legitimate.mechanism_dropped == 0


def test_no_mechanism_forwards_everything(uc1):
    r = run_scenario(uc1, "none")
    assert r.attack.mechanism_dropped == 0 and not r.blocked_ips
    assert r.detection_latency_windows is None


def test_shield_ground_truth_short():
    cfg = load_scenario("cmp_whitelisted")
    cfg = config_from_dict({**cfg.to_dict(), "duration_s": 120})
    r = run_scenario(cfg, "shield")
    assert r.attack.mechanism_dropped == 0
    assert r.attack.delivered + r.attack.clipped == r.attack.offered


def test_shield_rejects_replay(tmp_path, uc1):
    with pytest.raises(ConfigError):
        run_scenario(uc1, "shield", events=iter(()))


def test_compare_identical_reports(uc1_emm):
    s = compare_mechanisms(uc1_emm, uc1_emm)
    assert all(v == 1.0 for d in (s.peak_ratio, s.mean_ratio, s.window_peak_ratio)
               for v in d.values())
    assert [row["technique"] for row in s.features] == [
        "EDoS-Shield", "sPoW", "In-Cloud Scrubber", "EMM"]
    assert render_summary(s) == render_summary(compare_mechanisms(uc1_emm, uc1_emm))


def test_compare_mismatch(uc1, uc1_emm):
    other = run_scenario(uc1.with_seed(4), "emm")
    with pytest.raises(ComparisonError):
        compare_mechanisms(uc1_emm, other)


def test_monitored_series_block_means():
    assert monitored_series([1, 3, 5, 7, 9], 2) == [2.0, 6.0, 9.0]
    assert monitored_series([], 60) == []


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_scenarios_round_trip(tmp_path, name):
    cfg = load_scenario(name)
    assert resolve_scenario_path(name).exists()
    dump_scenario(cfg, tmp_path / "s.json")
    back = load_scenario(tmp_path / "s.json")
    assert back == cfg and back.fingerprint() == cfg.fingerprint()


def test_unknown_keys_rejected(uc1):
    d = uc1.to_dict()
    with pytest.raises(ConfigError):
        config_from_dict({**d, "colour": "red"})
    d["hosts"][0]["nickname"] = "x"
    with pytest.raises(ConfigError):
        config_from_dict(d)


def test_export_and_replay_detects(tmp_path, uc1):
    n = export_sflow(uc1, tmp_path / "t.sflow5")
    assert n >= uc1.n_windows
    r = run_replay(uc1, tmp_path / "t.sflow5")
    assert len(r.samples) == uc1.n_windows
    assert r.blocked_ips == {"10.0.1.1"}


def test_cli_run_compare_export(tmp_path):
    assert main(["run", "--scenario", "uc1_http_flood", "--seed", "2",
                 "--out", str(tmp_path / "r.csv"), "--alerts", str(tmp_path / "a.log")]) == 0
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 301
    alerts = [json.loads(x) for x in (tmp_path / "a.log").read_text().splitlines()]
    assert any(a["kind"] == "AttackNotification" and a["attackers"] == ["10.0.1.1"]
               for a in alerts)

    assert main(["export", "--scenario", "uc1_http_flood", "--seed", "2",
                 "--out", str(tmp_path / "t.sflow5")]) == 0
    assert main(["run", "--scenario", "uc1_http_flood", "--seed", "2",
                 "--replay", str(tmp_path / "t.sflow5"), "--out", str(tmp_path / "p.csv")]) == 0

    assert main(["compare", "--scenario", "uc1_http_flood", "--seed", "2",
                 "--out", str(tmp_path / "cmp")]) == 0
    summary = json.loads((tmp_path / "cmp" / "summary.json").read_text())
    assert {"peak_ratio_shield_over_emm", "mean_ratio_shield_over_emm",
            "feature_matrix"} <= set(summary)
    assert (tmp_path / "cmp" / "emm.csv").exists() and (tmp_path / "cmp" / "shield.csv").exists()


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"duration_s": 10}))
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["run", "--scenario", "uc1_http_flood", "--seed", "-1",
                 "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["run", "--scenario", "uc1_http_flood",
                 "--out", str(tmp_path / "missing" / "x.csv")]) == 3
    corrupt = tmp_path / "c.sflow5"
    corrupt.write_bytes(b"garbage!")
    assert main(["run", "--scenario", "uc1_http_flood", "--replay", str(corrupt),
                 "--out", str(tmp_path / "x.csv")]) == 2
    assert "configuration error" in capsys.readouterr().err
