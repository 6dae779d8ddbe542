#!/usr/bin/env python3
"""Long finite-size-scaling runs: the clean-Ising control and the
Nishimori-line threshold scans for the eta=1 and eta=2 toric families.

Per-point results append to JSONL checkpoints under results/, so an
interrupted run resumes where it stopped and later refits reuse the
same numbers. Runs single-core for a couple of hours; progress goes to
stdout, the final fits to results/scaling_summary.json.
"""

import json
import time
from pathlib import Path

from spinmap.montecarlo.scaling import (
    ISING_CONTROL_PROTOCOL,
    THRESHOLD_PROTOCOLS,
    pure_ising_fit,
    threshold_on_nishimori_line,
)

RESULTS = Path(__file__).resolve().parent.parent / "results"


def report(tag, est):
    lo, hi = est.t_c_ci
    print(f"[{time.strftime('%H:%M:%S')}] {tag}: "
          f"{est.t_c:.5f}  ci=({lo:.5f}, {hi:.5f})  "
          f"nu={est.nu:.3f}", flush=True)
    return {"value": est.t_c, "ci": [lo, hi], "nu": est.nu}


def main():
    RESULTS.mkdir(exist_ok=True)
    summary = {}

    for eta in (1.0, 2.0):
        proto = THRESHOLD_PROTOCOLS[eta]
        t0 = time.time()
        est = threshold_on_nishimori_line(
            eta, checkpoint=RESULTS / f"nishimori_eta{eta:.0f}.jsonl",
            **proto)
        print(f"eta={eta:.0f} scan took {time.time() - t0:.0f}s",
              flush=True)
        summary[f"p_t_eta{eta:.0f}"] = report(f"p_t(eta={eta:.0f})", est)

    t0 = time.time()
    est = pure_ising_fit(checkpoint=RESULTS / "pure_ising.jsonl",
                         **ISING_CONTROL_PROTOCOL)
    print(f"ising control took {time.time() - t0:.0f}s", flush=True)
    summary["t_c_ising"] = report("T_c(pure)", est)

    with (RESULTS / "scaling_summary.json").open("w") as fh:
        json.dump(summary, fh, indent=2)
    print("summary written", flush=True)


if __name__ == "__main__":
    main()
