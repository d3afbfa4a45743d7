"""Reachable output sets of the CSTR benchmark, plus plot-ready hull and vertex data.

Writes reach_sets.json, containment_report.json and reach_hulls.csv
(k, lo_1, hi_1, lo_2, hi_2) into --out, and the sampled outputs used by the
containment check into reach_samples.csv.
"""
import argparse
import csv

import numpy as np

from nzpc.config import load_config
from nzpc.data import ensure_dir
from nzpc.experiments import (
    CHECK_STREAM,
    dump_json,
    make_simulator,
    run_reach,
    stream_seed,
)
from nzpc.plant import sample_in_zonotope
from nzpc.sets import Zonotope


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", default="results/reach")
    ap.add_argument("--samples", type=int)
    ap.add_argument("--plot-samples", type=int, default=200)
    args = ap.parse_args(argv)

    cfg = load_config(args.config)
    out = ensure_dir(args.out)
    result, report, window = run_reach(cfg, samples=args.samples)
    dump_json(result.to_dict(), out / "reach_sets.json")
    dump_json(report.to_dict(), out / "containment_report.json")

    with open(out / "reach_hulls.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "lo_1", "hi_1", "lo_2", "hi_2"])
        for k, z in enumerate([result.initial] + result.output_sets):
            h = z.interval()
            wr.writerow([k, h.lower[0], h.upper[0], h.lower[1], h.upper[1]])

    # true outputs for scatter plots, drawn the same way as in the containment check
    sim = make_simulator(cfg, "reach", stream_seed(cfg.seed, CHECK_STREAM) + 1)
    X0, Zu = Zonotope.from_dict(cfg.reach.X0), Zonotope.from_dict(cfg.reach.Zu)
    with open(out / "reach_samples.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["sample", "k", "y_1", "y_2"])
        for s in range(args.plot_samples):
            x = sample_in_zonotope(X0, sim.rng)
            wr.writerow([s, 0, *sim.measure(x)])
            for k in range(1, result.horizon + 1):
                x = sim.step(x, sample_in_zonotope(Zu, sim.rng))
                wr.writerow([s, k, *sim.measure(x)])

    print(f"window columns {window.T}, containment fractions {report.fractions}")
    print(f"worst margins {np.round(report.worst_margin, 4).tolist()}")
    print(f"wrote {out}")
    return 0 if report.samples == 0 or report.all_contained else 1


if __name__ == "__main__":
    raise SystemExit(main())
