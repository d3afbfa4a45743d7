"""Wiring between an ExperimentConfig and the library: plants, data, runs."""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .control import ClosedLoopLog, NzpcConfig, run_closed_loop
from .data import DataWindow, PlantDimensions, build_window
from .plant import (
    CstrParams,
    ContainmentReport,
    PlantSimulator,
    cstr_deviation_step,
    cstr_step,
    generate_dataset,
    linear_dynamics,
    verify_containment,
)
from .reach import ReachConfig, ReachResult, reach_horizon
from .sets import Zonotope

# independent random streams derived from one user seed
DATA_STREAM, LOOP_STREAM, CHECK_STREAM = 0, 1, 2


def stream_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def make_dims(cfg: ExperimentConfig) -> PlantDimensions:
    return PlantDimensions(cfg.n_x, cfg.n_u, cfg.n_y, np.array(cfg.H, dtype=float), cfg.eta)


def make_dynamics(cfg: ExperimentConfig):
    p = cfg.plant
    if p.name == "cstr":
        return cstr_deviation_step
    if p.name == "cstr_printed":
        params = CstrParams(exp_arg_max=p.exp_arg_max)
        return lambda x, u: cstr_step(x, u, params)
    return linear_dynamics(p.A, p.B)


def _block(cfg: ExperimentConfig, block: str):
    if block not in ("reach", "nzpc"):
        raise ValueError(f"unknown experiment block {block!r}")
    return cfg.reach if block == "reach" else cfg.nzpc


def input_domain(cfg: ExperimentConfig, block: str) -> Zonotope:
    spec = _block(cfg, block)
    if block == "reach":
        return Zonotope.from_dict(spec.Zu)
    return Zonotope.from_dict(spec.Zu if spec.Zu is not None else spec.U)


def make_simulator(cfg: ExperimentConfig, block: str, seed: int) -> PlantSimulator:
    spec = _block(cfg, block)
    return PlantSimulator(make_dynamics(cfg), make_dims(cfg), Zonotope.from_dict(spec.Zw),
                          Zonotope.from_dict(spec.Zv), seed)


def generate(cfg: ExperimentConfig, block: str = "reach", seed: Optional[int] = None,
             record: bool = False):
    """Offline experiments of `block`: x0 from its X0, inputs from its input domain."""
    spec = _block(cfg, block)
    seed = cfg.seed if seed is None else seed
    sim = make_simulator(cfg, block, stream_seed(seed, DATA_STREAM))
    return generate_dataset(sim, Zonotope.from_dict(spec.X0), input_domain(cfg, block),
                            spec.data.trajectories, spec.data.length, record=record)


def reach_config(cfg: ExperimentConfig, block: str = "reach") -> ReachConfig:
    spec = _block(cfg, block)
    eps = spec.z_eps_override
    return ReachConfig(
        Zw=Zonotope.from_dict(spec.Zw),
        Zv=Zonotope.from_dict(spec.Zv),
        Zu=input_domain(cfg, block),
        Lf=np.array(spec.Lf, dtype=float),
        delta=float(spec.delta),
        z_eps_override=None if eps is None else Zonotope.from_dict(eps),
        max_generators=spec.max_generators,
    )


def nzpc_config(cfg: ExperimentConfig, steps: Optional[int] = None) -> NzpcConfig:
    s = cfg.nzpc
    return NzpcConfig(
        N=s.N,
        Q=np.array(s.Q, dtype=float),
        R=np.array(s.R, dtype=float),
        y_ref=np.array(s.y_ref, dtype=float),
        u_ref=np.array(s.u_ref, dtype=float),
        input_constraint=Zonotope.from_dict(s.U),
        output_lower=np.array(s.Y_lower, dtype=float),
        output_upper=np.array(s.Y_upper, dtype=float),
        steps=s.steps if steps is None else steps,
        reach=reach_config(cfg, "nzpc"),
        fallback_hold=s.fallback_hold,
    )


def initial_output_set(cfg: ExperimentConfig) -> Zonotope:
    """H X0 + Zv of the reachability block."""
    dims = make_dims(cfg)
    return dims.H @ Zonotope.from_dict(cfg.reach.X0) + Zonotope.from_dict(cfg.reach.Zv)


# -- runs -----------------------------------------------------------------------

def run_reach(cfg: ExperimentConfig, trajectories=None, seed: Optional[int] = None,
              samples: Optional[int] = None) -> tuple[ReachResult, ContainmentReport, DataWindow]:
    seed = cfg.seed if seed is None else seed
    if trajectories is None:
        trajectories = generate(cfg, "reach", seed)
    window = build_window(trajectories)
    dims = make_dims(cfg)
    rc = reach_config(cfg, "reach")
    result = reach_horizon(window, initial_output_set(cfg), cfg.reach.N, rc, dims)
    n = cfg.reach.samples if samples is None else samples
    sim = make_simulator(cfg, "reach", 0)
    report = verify_containment(sim, result, Zonotope.from_dict(cfg.reach.X0), rc.Zu, n,
                                seed=stream_seed(seed, CHECK_STREAM))
    return result, report, window


def run_nzpc(cfg: ExperimentConfig, seed: Optional[int] = None, steps: Optional[int] = None,
             trajectories=None, keep_sets: bool = False) -> ClosedLoopLog:
    """One closed-loop run; x0 is the center of the controller's X0."""
    seed = cfg.seed if seed is None else seed
    if trajectories is None:
        trajectories = generate(cfg, "nzpc", seed)
    window = build_window(trajectories)
    sim = make_simulator(cfg, "nzpc", stream_seed(seed, LOOP_STREAM))
    x0 = Zonotope.from_dict(cfg.nzpc.X0).center
    return run_closed_loop(sim, nzpc_config(cfg, steps), window, x0, keep_sets=keep_sets)


def _run_nzpc_job(args):
    cfg, seed, steps, keep_sets = args
    return seed, run_nzpc(cfg, seed, steps, keep_sets=keep_sets)


def run_nzpc_batch(cfg: ExperimentConfig, seeds, steps: Optional[int] = None,
                   workers: int = 1, keep_sets: bool = False) -> dict:
    """Independent closed loops, one per seed; returns {seed: log}."""
    jobs = [(cfg, s, steps, keep_sets) for s in seeds]
    if workers <= 1 or len(jobs) <= 1:
        return dict(map(_run_nzpc_job, jobs))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return dict(ex.map(_run_nzpc_job, jobs))


def log_summary(log: ClosedLoopLog, y_ref) -> dict:
    y_ref = np.asarray(y_ref, dtype=float)
    out = {"steps": len(log.records), "aborted": log.aborted, "violations": log.violations}
    if log.records:
        e0 = float(np.linalg.norm(log.records[0].y - y_ref))
        e1 = float(np.linalg.norm(log.final_output - y_ref))
        out.update(initial_error=e0, final_error=e1,
                   mean_solve_ms=float(np.mean([r.solve_ms for r in log.records])))
    return out


# -- naive Lipschitz / covering-radius estimate -----------------------------------

@dataclass
class LipschitzEstimate:
    Lf: np.ndarray
    delta: float
    pairs: int
    probes: int

    def to_dict(self) -> dict:
        return {"Lf": self.Lf.tolist(), "delta": self.delta, "pairs": self.pairs,
                "probes": self.probes}


NAIVE_DISCLAIMER = (
    "naive estimate: largest finite-difference slope over data pairs and a Monte-Carlo "
    "covering radius; noise inflates slopes and probes underestimate the radius, so "
    "neither is a certified bound"
)


def _points(window: DataWindow, dims: PlantDimensions, Zv: Zonotope):
    Hp = dims.H_pinv
    xi = np.vstack([Hp @ (window.Yminus - Zv.center[:, None]), window.Uminus])
    succ = Hp @ (window.Yplus - Zv.center[:, None])
    return xi, succ


def naive_lipschitz(window: DataWindow, dims: PlantDimensions, Zv: Zonotope,
                    domain: Optional[tuple] = None, probes: int = 2000, seed: int = 0,
                    min_dist: float = 1e-12) -> LipschitzEstimate:
    """Per-state slope maxima and a covering radius of the window's (x, u) points.

    States are reconstructed as H^+(y - c_v). Lf_i is the largest
    |x+_i(j) - x+_i(l)| / |xi_j - xi_l|_2 over column pairs (coincident pairs
    are skipped). The covering radius is the largest distance from a probe
    point, drawn uniformly from `domain` = (lower, upper) (the data's bounding
    box by default), to its nearest data point.
    """
    if window.T < 2:
        raise ValueError("need at least two data columns")
    xi, succ = _points(window, dims, Zv)
    diff = xi[:, :, None] - xi[:, None, :]
    dist = np.sqrt((diff ** 2).sum(axis=0))
    iu = np.triu_indices(window.T, 1)
    d = dist[iu]
    ok = d > min_dist
    if not np.any(ok):
        raise ValueError("all data pairs coincide; slopes are undefined")
    Lf = np.empty(dims.n_x)
    for i in range(dims.n_x):
        dx = np.abs(succ[i][:, None] - succ[i][None, :])[iu]
        Lf[i] = np.max(dx[ok] / d[ok])

    lo, hi = (xi.min(axis=1), xi.max(axis=1)) if domain is None else map(np.asarray, domain)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(probes, xi.shape[0]))
    delta = 0.0
    for chunk in np.array_split(pts, max(1, probes // 500)):
        dd = np.sqrt(((chunk[:, :, None] - xi[None, :, :]) ** 2).sum(axis=1))
        delta = max(delta, float(dd.min(axis=1).max(initial=0.0)))
    return LipschitzEstimate(Lf, delta, int(ok.sum()), probes)


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
