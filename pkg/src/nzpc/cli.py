"""Command-line runner: data generation, reachability, closed loop, checks.

Precedence: built-in defaults < --config file < command-line flags.
Exit codes: 0 success, 1 containment failure / constraint violation /
infeasible step, 2 bad configuration or arguments.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import ConfigError, dump_config, load_config
from .data import build_window, ensure_dir, read_trajectories_csv, write_states_csv, write_trajectories_csv
from .experiments import (
    NAIVE_DISCLAIMER,
    dump_json,
    generate,
    log_summary,
    make_dims,
    naive_lipschitz,
    run_nzpc,
    run_nzpc_batch,
    run_reach,
)
from .plant import AssumptionViolation, PlantDomainError
from .sets import Zonotope


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if getattr(args, "samples", None) is not None:
        cfg.reach.samples = args.samples
    if getattr(args, "steps", None) is not None:
        cfg.nzpc.steps = args.steps
    if getattr(args, "seeds", None) is not None:
        cfg.nzpc.seeds = args.seeds
    cfg.validate()
    return cfg


def _trajectories(args, cfg, block):
    if getattr(args, "data", None):
        return read_trajectories_csv(args.data)
    return generate(cfg, block, cfg.seed)


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    out = ensure_dir(cfg.out)
    res = generate(cfg, args.block, cfg.seed, record=args.record)
    trajs, states = res if args.record else (res, None)
    path = out / f"{args.block}_trajectories.csv"
    write_trajectories_csv(path, trajs)
    if states is not None:
        write_states_csv(out / f"{args.block}_states.csv", [t.id for t in trajs], states)
    raw = sum(len(t) for t in trajs)
    print(f"wrote {path}: {len(trajs)} trajectories, {raw} samples, "
          f"{build_window(trajs).T} window columns")
    return 0


def cmd_reach(args) -> int:
    cfg = _load(args)
    out = ensure_dir(cfg.out)
    result, report, window = run_reach(cfg, _trajectories(args, cfg, "reach"), cfg.seed)
    dump_json(result.to_dict(), out / "reach_sets.json")
    dump_json(report.to_dict(), out / "containment_report.json")
    print(f"window columns: {window.T}; horizon {result.horizon}")
    for k, z in enumerate(result.output_sets, 1):
        hull = z.interval()
        frac = f"{report.fractions[k - 1]:.4f}" if report.samples else "-"
        print(f"k={k}: generators={z.num_generators} hull lo={np.round(hull.lower, 4).tolist()} "
              f"hi={np.round(hull.upper, 4).tolist()} contained={frac}")
    if report.samples == 0:
        print("no Monte-Carlo samples requested; sets written only")
        return 0
    print("containment:", "PASS" if report.all_contained else "FAIL")
    return 0 if report.all_contained else 1


def _run_batch(args, cfg):
    seeds = [cfg.seed] if args.single else list(range(cfg.seed, cfg.seed + cfg.nzpc.seeds))
    logs = run_nzpc_batch(cfg, seeds, workers=args.workers, keep_sets=args.dump_sets)
    return seeds, logs


def cmd_nzpc(args) -> int:
    cfg = _load(args)
    out = ensure_dir(cfg.out)
    if args.data:
        # a fixed data file means a single run
        logs = {cfg.seed: run_nzpc(cfg, cfg.seed, trajectories=read_trajectories_csv(args.data),
                                   keep_sets=args.dump_sets)}
    else:
        _, logs = _run_batch(args, cfg)
    summary = {}
    bad = 0
    for seed, log in logs.items():
        log.write_csv(out / f"closed_loop_seed{seed}.csv")
        if args.dump_sets:
            dump_json(log.sets_dump(), out / f"closed_loop_sets_seed{seed}.json")
        s = log_summary(log, cfg.nzpc.y_ref)
        summary[str(seed)] = s
        v = s["violations"]
        line = (f"seed {seed}: steps={s['steps']} output_violations={v['output']} "
                f"input_violations={v['input']} infeasible={v['infeasible']}")
        if s["steps"]:
            line += f" |y-y_ref| {s['initial_error']:.4g} -> {s['final_error']:.4g}"
        if log.aborted:
            line += f" ABORTED ({log.aborted})"
        print(line)
        bad += not log.ok
    dump_json(summary, out / "closed_loop_summary.json")
    return 1 if bad else 0


def cmd_verify(args) -> int:
    cfg = _load(args)
    ok = True
    if not args.skip_reach:
        _, report, _ = run_reach(cfg, seed=cfg.seed)
        passed = report.samples == 0 or report.all_contained
        print(f"[{'PASS' if passed else 'FAIL'}] reachable-set containment "
              f"({report.samples} rollouts, fractions {report.fractions})")
        ok &= passed
    if not args.skip_nzpc:
        seeds, logs = _run_batch(args, cfg)
        bad = [s for s in seeds if not logs[s].ok]
        steps = sum(len(logs[s].records) for s in seeds)
        print(f"[{'PASS' if not bad else 'FAIL'}] closed-loop constraints "
              f"({len(seeds)} seeds, {steps} steps, failing seeds {bad})")
        ok &= not bad
    return 0 if ok else 1


def cmd_estimate_lipschitz(args) -> int:
    cfg = _load(args)
    block_spec = cfg.reach if args.block == "reach" else cfg.nzpc
    window = build_window(_trajectories(args, cfg, args.block))
    est = naive_lipschitz(window, make_dims(cfg), Zonotope.from_dict(block_spec.Zv),
                          probes=args.probes, seed=cfg.seed)
    print(f"NOTE: {NAIVE_DISCLAIMER}")
    print(f"columns: {window.T}, pairs used: {est.pairs}")
    print(f"Lf    = {est.Lf.tolist()}")
    print(f"delta = {est.delta}")
    return 0


def cmd_dump_config(args) -> int:
    cfg = _load(args)
    sys.stdout.write(dump_config(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config (defaults: the CSTR benchmark)")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--out", help="output directory")

    p = argparse.ArgumentParser(prog="nzpc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="simulate offline trajectories")
    g.add_argument("--block", choices=["reach", "nzpc"], default="reach")
    g.add_argument("--record", action="store_true", help="also write the true states")
    g.set_defaults(func=cmd_gen_data)

    r = sub.add_parser("reach", parents=[common], help="reachable sets + containment check")
    r.add_argument("--data", help="trajectory CSV (default: simulate)")
    r.add_argument("--samples", type=int, help="Monte-Carlo rollouts")
    r.set_defaults(func=cmd_reach)

    def loop_flags(q):
        q.add_argument("--steps", type=int, help="closed-loop steps")
        q.add_argument("--seeds", type=int, help="number of seeds, starting at --seed")
        q.add_argument("--single", action="store_true", help="run only the base seed")
        q.add_argument("--workers", type=int, default=1, help="parallel processes")
        q.add_argument("--dump-sets", action="store_true", help="write per-step reachable sets")

    n = sub.add_parser("nzpc", parents=[common], help="closed-loop predictive control")
    n.add_argument("--data", help="initial trajectory CSV (default: simulate)")
    loop_flags(n)
    n.set_defaults(func=cmd_nzpc)

    v = sub.add_parser("verify", parents=[common], help="containment and constraint checks")
    v.add_argument("--samples", type=int, help="Monte-Carlo rollouts")
    v.add_argument("--skip-reach", action="store_true")
    v.add_argument("--skip-nzpc", action="store_true")
    loop_flags(v)
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("estimate-lipschitz", parents=[common],
                       help="naive Lipschitz / covering-radius estimate")
    e.add_argument("--data", help="trajectory CSV (default: simulate)")
    e.add_argument("--block", choices=["reach", "nzpc"], default="reach")
    e.add_argument("--probes", type=int, default=2000)
    e.set_defaults(func=cmd_estimate_lipschitz)

    d = sub.add_parser("dump-config", parents=[common], help="print the effective config")
    d.set_defaults(func=cmd_dump_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (AssumptionViolation, PlantDomainError) as exc:
        print(f"simulation stopped: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
