"""Command line entry point.

    emm run --scenario uc1_http_flood --mechanism emm --seed 1 --out run.csv
    emm compare --scenario cmp_whitelisted --seed 1 --out results/
    emm export --scenario uc1_http_flood --seed 1 --out trace.sflow5
    emm run --scenario uc1_http_flood --replay trace.sflow5 --out replay.csv

Exit status: 0 on success, 2 on configuration errors, 3 on I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from emm.config import load_scenario
from emm.errors import ConfigError, MalformedDatagram, OrderingError
from emm.harness import (compare_mechanisms, export_sflow, render_summary, run_replay,
                         run_scenario, write_csv)
from emm.mitigator import FileAlertSink

log = logging.getLogger("emm")

EXIT_CONFIG = 2
EXIT_IO = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emm", description="EDoS mitigation simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", required=True,
                        help="scenario JSON path or the name of a shipped scenario")
        sp.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
        sp.add_argument("--out", required=True)

    run = sub.add_parser("run", help="run one mechanism and write per-window metrics")
    common(run)
    run.add_argument("--mechanism", choices=["emm", "shield", "none"], default="emm")
    run.add_argument("--replay", help=".sflow5 file to ingest instead of simulating")
    run.add_argument("--alerts", help="append alerts to this NDJSON log")

    cmp_ = sub.add_parser("compare", help="run EMM and EDoS-Shield and compare them")
    common(cmp_)

    exp = sub.add_parser("export", help="write sampled scenario traffic as .sflow5")
    common(exp)
    return p


def _load(args):
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg = cfg.with_seed(args.seed)
    return cfg


def _cmd_run(args) -> None:
    cfg = _load(args)
    sink = FileAlertSink(args.alerts) if args.alerts else None
    if args.replay:
        report = run_replay(cfg, args.replay, args.mechanism, alert_sink=sink)
    else:
        report = run_scenario(cfg, args.mechanism, alert_sink=sink)
    write_csv(report, args.out)
    log.info("%s/%s: detection latency %s, blocked %s", cfg.name, args.mechanism,
             report.detection_latency_windows, sorted(report.blocked_ips))


def _cmd_compare(args) -> None:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    r_emm = run_scenario(cfg, "emm")
    r_shield = run_scenario(cfg, "shield")
    write_csv(r_emm, out / "emm.csv")
    write_csv(r_shield, out / "shield.csv")
    summary = compare_mechanisms(r_emm, r_shield)
    (out / "summary.json").write_text(render_summary(summary))
    log.info("peak ratios %s", summary.peak_ratio)


def _cmd_export(args) -> None:
    cfg = _load(args)
    n = export_sflow(cfg, args.out)
    log.info("wrote %d datagrams to %s", n, args.out)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handler = {"run": _cmd_run, "compare": _cmd_compare, "export": _cmd_export}[args.command]
    try:
        handler(args)
    except (ConfigError, MalformedDatagram, OrderingError) as exc:
        print(f"emm: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"emm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
