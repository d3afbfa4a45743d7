"""Closed-loop control of the CSTR benchmark over several seeds.

Writes one CSV log per seed (outputs, inputs, solver status, predicted hulls)
and closed_loop_summary.json into --out.
"""
import argparse

from nzpc.config import load_config
from nzpc.data import ensure_dir
from nzpc.experiments import dump_json, log_summary, run_nzpc_batch


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", default="results/nzpc")
    ap.add_argument("--steps", type=int)
    ap.add_argument("--seeds", type=int)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)

    cfg = load_config(args.config)
    n = cfg.nzpc.seeds if args.seeds is None else args.seeds
    out = ensure_dir(args.out)
    logs = run_nzpc_batch(cfg, range(cfg.seed, cfg.seed + n), args.steps, args.workers)
    summary = {}
    for seed, log in logs.items():
        log.write_csv(out / f"closed_loop_seed{seed}.csv")
        summary[str(seed)] = s = log_summary(log, cfg.nzpc.y_ref)
        print(f"seed {seed}: {s['steps']} steps, violations {s['violations']}, "
              f"|y - y_ref| {s.get('initial_error', 0):.3g} -> {s.get('final_error', 0):.3g}")
    dump_json(summary, out / "closed_loop_summary.json")
    return 0 if all(log.ok for log in logs.values()) else 1


if __name__ == "__main__":
    raise SystemExit(main())
