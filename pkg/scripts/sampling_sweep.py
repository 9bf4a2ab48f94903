"""Detection latency and false positives as the sFlow sampling rate grows.

Each run exports the sampled trace and replays it through the detector, so
the counts the detector sees are 1-in-N samples.

    python scripts/sampling_sweep.py --scenario uc1_http_flood --rates 1 2 4 8 --seeds 1 2 3
"""

import argparse
import dataclasses
import tempfile
from pathlib import Path

from emm.config import load_scenario
from emm.harness import export_sflow, run_replay


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", default="uc1_http_flood")
    p.add_argument("--rates", type=int, nargs="+", default=[1, 2, 4, 8])
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    args = p.parse_args()

    print("rate  seed  latency  blocked  false_positives")
    with tempfile.TemporaryDirectory() as tmp:
        for rate in args.rates:
            for seed in args.seeds:
                cfg = dataclasses.replace(load_scenario(args.scenario).with_seed(seed),
                                          sampling_rate=rate)
                trace = Path(tmp) / f"r{rate}_s{seed}.sflow5"
                export_sflow(cfg, trace)
                r = run_replay(cfg, trace)
                print(f"{rate:4d}  {seed:4d}  {str(r.detection_latency_windows):>7}  "
                      f"{len(r.blocked_ips):7d}  {len(r.false_positive_ips):15d}")


if __name__ == "__main__":
    main()
