"""Receding-horizon control on data-driven reachable sets.

With point inputs the reachable-set recursion has generators that do not
depend on the inputs and centers that are affine in them. The predictor
records both; the control problem then becomes a convex QP over the input
sequence and the generator coefficients of every predicted output.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import DataWindow, PlantDimensions, slide_window
from .plant import PlantSimulator
from .qp import INFEASIBLE, OPTIMAL, QpProblem, QpSolution, solve_qp
from .reach import LinearizedModel, ReachConfig, learn
from .sets import DimensionError, Zonotope, contains_point, reduce_order


def _check_spd(M: np.ndarray, name: str) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-12):
        raise ValueError(f"{name} must be a symmetric square matrix")
    if np.linalg.eigvalsh(M)[0] <= 0:
        raise ValueError(f"{name} must be positive definite")
    return M


def _is_box(z: Zonotope) -> bool:
    """True when every generator moves a single coordinate."""
    return bool(np.all(np.count_nonzero(z.generators, axis=0) <= 1))


@dataclass(frozen=True, eq=False)
class NzpcConfig:
    """Horizon, cost and constraints of the control problem.

    `input_schedule` / `output_schedule` give time-varying constraints
    indexed by absolute time (the last entry is held beyond the end); when
    absent the constant `input_constraint` and output bounds apply.
    """

    N: int
    Q: np.ndarray
    R: np.ndarray
    y_ref: np.ndarray
    u_ref: np.ndarray
    input_constraint: Zonotope
    output_lower: np.ndarray
    output_upper: np.ndarray
    steps: int
    reach: ReachConfig
    input_schedule: Optional[tuple] = None
    output_schedule: Optional[tuple] = None
    fallback_hold: bool = False
    qp_tol: float = 1e-6
    qp_max_iter: int = 20000

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon N must be at least 1")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        Q = _check_spd(self.Q, "Q")
        R = _check_spd(self.R, "R")
        n_y, n_u = Q.shape[0], R.shape[0]
        vecs = {}
        for name, n in (("y_ref", n_y), ("u_ref", n_u), ("output_lower", n_y), ("output_upper", n_y)):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if v.size != n:
                raise DimensionError(f"{name} has length {v.size}, expected {n}")
            vecs[name] = v
        if np.any(vecs["output_lower"] > vecs["output_upper"]):
            raise ValueError("output_lower exceeds output_upper")
        inputs = [self.input_constraint] + list(self.input_schedule or ())
        for U in inputs:
            if U.dim != n_u:
                raise DimensionError("input constraint has the wrong dimension")
            hull, dom = U.interval(), self.reach.Zu.interval()
            if np.any(hull.lower < dom.lower - 1e-12) or np.any(hull.upper > dom.upper + 1e-12):
                raise ValueError("input constraint is not inside the input domain Zu")
        for lo, hi in self.output_schedule or ():
            if np.size(lo) != n_y or np.size(hi) != n_y or np.any(np.asarray(lo) > np.asarray(hi)):
                raise ValueError("bad output schedule entry")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        for name, v in vecs.items():
            object.__setattr__(self, name, v)
        if self.input_schedule is not None:
            object.__setattr__(self, "input_schedule", tuple(self.input_schedule))
        if self.output_schedule is not None:
            object.__setattr__(self, "output_schedule", tuple(
                (np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
                for lo, hi in self.output_schedule))

    @property
    def n_y(self) -> int:
        return self.Q.shape[0]

    @property
    def n_u(self) -> int:
        return self.R.shape[0]

    def input_set(self, t: int) -> Zonotope:
        if not self.input_schedule:
            return self.input_constraint
        return self.input_schedule[min(t, len(self.input_schedule) - 1)]

    def output_bounds(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        if not self.output_schedule:
            return self.output_lower, self.output_upper
        return self.output_schedule[min(t, len(self.output_schedule) - 1)]


# -- predictor ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AffinePredictor:
    """Output sets over the horizon as functions of the input sequence.

    The set k steps ahead (k = 1..N, stored at index k-1) is
    < offset[k-1] + gain[k-1] @ u, generators[k-1] > with u the stacked
    inputs u_0..u_{N-1}; gain[k-1] is zero on the inputs u_k.. .
    """

    offset: np.ndarray        # (N, n_y)
    gain: np.ndarray          # (N, n_y, N * n_u)
    generators: tuple         # N matrices (n_y, gamma_k)

    @property
    def N(self) -> int:
        return self.offset.shape[0]

    @property
    def n_u(self) -> int:
        return self.gain.shape[2] // self.N

    @property
    def delta_g(self) -> np.ndarray:
        return np.array([np.abs(g).sum(axis=1) for g in self.generators])

    def block_gain(self, k: int, j: int) -> np.ndarray:
        """Coefficient of u_j in the center k+1 steps ahead."""
        return self.gain[k][:, j * self.n_u:(j + 1) * self.n_u]

    def centers(self, u_seq) -> np.ndarray:
        u = np.asarray(u_seq, dtype=float).reshape(-1)
        if u.size != self.gain.shape[2]:
            raise DimensionError(f"input sequence of length {u.size}, expected {self.gain.shape[2]}")
        return self.offset + self.gain @ u

    def sets(self, u_seq) -> list[Zonotope]:
        return [Zonotope(c, g) for c, g in zip(self.centers(u_seq), self.generators)]


def build_predictor(model: LinearizedModel, ZL: Zonotope, Zeps: Zonotope, Ry0: Zonotope,
                    N: int, cfg: ReachConfig, dims: PlantDimensions) -> AffinePredictor:
    """Run the reachable-set recursion symbolically with point inputs u_0..u_{N-1}."""
    if N < 1:
        raise ValueError("horizon must be at least 1")
    if Ry0.dim != dims.n_y:
        raise DimensionError("initial output set has the wrong dimension")
    Hp, n_y, n_u = dims.H_pinv, dims.n_y, dims.n_u
    A, B, p = model.A, model.B, model.point
    const = (model.m0 - A @ (Hp @ cfg.Zv.center) - A @ p.x_star - B @ p.u_star
             + cfg.Zv.center + dims.H @ cfg.Zw.center + ZL.center + Zeps.center)
    fixed_gens = np.hstack([cfg.Zv.generators, dims.H @ cfg.Zw.generators,
                            ZL.generators, Zeps.generators])
    state_extra = np.hstack([-Hp @ cfg.Zv.generators, dims.eta * dims.g_eta])
    AHp = A @ Hp

    off = np.array(Ry0.center)
    gain = np.zeros((n_y, N * n_u))
    G = Ry0.generators
    offsets, gains, gens = [], [], []
    for k in range(N):
        off = const + AHp @ off
        gain = AHp @ gain
        gain[:, k * n_u:(k + 1) * n_u] += B
        Gx = np.hstack([Hp @ G, state_extra])
        G = np.hstack([A @ Gx, fixed_gens])
        if cfg.max_generators is not None:
            G = reduce_order(Zonotope(np.zeros(n_y), G), cfg.max_generators).generators
        offsets.append(off)
        gains.append(gain.copy())
        gens.append(np.array(G))
    return AffinePredictor(np.array(offsets), np.array(gains), tuple(gens))


# -- QP -------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QpLayout:
    """Where each block lives in the decision vector [u, beta_1..beta_N, alpha_0..]."""

    n_u: int
    N: int
    beta_slices: tuple
    alpha_slices: tuple       # None for steps whose input set is handled as a box
    n: int
    const: float              # cost terms independent of the decision vector

    def inputs(self, z) -> np.ndarray:
        return np.asarray(z)[: self.N * self.n_u].reshape(self.N, self.n_u)

    def beta(self, z, k: int) -> np.ndarray:
        return np.asarray(z)[self.beta_slices[k]]


def assemble_qp(pred: AffinePredictor, cfg: NzpcConfig, t: int = 0) -> tuple[QpProblem, QpLayout]:
    """The horizon problem at time t as a QP.

    Predicted outputs y_k = c_k(u) + G_k beta_k with |beta_k| <= 1, so
    membership in the reachable set is exact; the output constraint is
    imposed on the interval hull c_k(u) +- dg_k.
    """
    N, n_u, n_y = cfg.N, cfg.n_u, cfg.n_y
    if pred.N != N or pred.n_u != n_u:
        raise DimensionError("predictor horizon / input size does not match the config")
    nU = N * n_u
    sizes = [g.shape[1] for g in pred.generators]
    pos = nU
    beta_slices = []
    for s in sizes:
        beta_slices.append(slice(pos, pos + s))
        pos += s
    alpha_slices = []
    for k in range(N):
        U = cfg.input_set(t + k)
        if _is_box(U):
            alpha_slices.append(None)
        else:
            alpha_slices.append(slice(pos, pos + U.num_generators))
            pos += U.num_generators
    n = pos

    P = np.zeros((n, n))
    q = np.zeros(n)
    const = 0.0
    rows, lo, hi = [], [], []
    for k in range(N):
        # y_k = S z + offset_k
        S = np.zeros((n_y, n))
        S[:, :nU] = pred.gain[k]
        S[:, beta_slices[k]] = pred.generators[k]
        r = pred.offset[k] - cfg.y_ref
        P += 2.0 * S.T @ cfg.Q @ S
        q += 2.0 * S.T @ cfg.Q @ r
        const += float(r @ cfg.Q @ r)

        sl = slice(k * n_u, (k + 1) * n_u)
        P[sl, sl] += 2.0 * cfg.R
        q[sl] -= 2.0 * cfg.R @ cfg.u_ref
        const += float(cfg.u_ref @ cfg.R @ cfg.u_ref)

        # interval hull of the k-th set inside the output bounds (one-sided rows)
        y_lo, y_hi = cfg.output_bounds(t + k + 1)
        dg = pred.delta_g[k]
        Cu = np.zeros((n_y, n))
        Cu[:, :nU] = pred.gain[k]
        for i in range(n_y):
            if np.isfinite(y_hi[i]):
                rows.append(Cu[i])
                lo.append(-np.inf)
                hi.append(y_hi[i] - dg[i] - pred.offset[k][i])
            if np.isfinite(y_lo[i]):
                rows.append(Cu[i])
                lo.append(y_lo[i] + dg[i] - pred.offset[k][i])
                hi.append(np.inf)

        # generator coefficients
        for j in range(beta_slices[k].start, beta_slices[k].stop):
            e = np.zeros(n)
            e[j] = 1.0
            rows.append(e)
            lo.append(-1.0)
            hi.append(1.0)

        # input constraint
        U = cfg.input_set(t + k)
        if alpha_slices[k] is None:
            box = U.interval()
            for i in range(n_u):
                e = np.zeros(n)
                e[k * n_u + i] = 1.0
                rows.append(e)
                lo.append(box.lower[i])
                hi.append(box.upper[i])
        else:
            a = alpha_slices[k]
            for i in range(n_u):
                e = np.zeros(n)
                e[k * n_u + i] = 1.0
                e[a] = -U.generators[i]
                rows.append(e)
                lo.append(U.center[i])
                hi.append(U.center[i])
            for j in range(a.start, a.stop):
                e = np.zeros(n)
                e[j] = 1.0
                rows.append(e)
                lo.append(-1.0)
                hi.append(1.0)

    A = np.array(rows) if rows else np.zeros((0, n))
    prob = QpProblem(P, q, A, np.array(lo), np.array(hi))
    layout = QpLayout(n_u, N, tuple(beta_slices), tuple(alpha_slices), n, const)
    return prob, layout


# -- one control step -----------------------------------------------------------

class InfeasibleStep(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass(eq=False)
class StepResult:
    u: np.ndarray                 # first input of the optimal sequence
    inputs: np.ndarray            # (N, n_u) optimal sequence
    predicted: np.ndarray         # (N, n_y) predicted outputs c + G beta
    sets: list                    # reachable sets at the optimal inputs
    status: str
    qp: QpSolution
    predictor: AffinePredictor
    layout: QpLayout
    diagnostics: dict = field(default_factory=dict)

    @property
    def cost(self) -> float:
        return self.qp.objective + self.layout.const


def diagnose(pred: AffinePredictor, cfg: NzpcConfig, t: int = 0) -> dict:
    """Which constraint blocks fail with every input at the center of its set."""
    u = np.concatenate([cfg.input_set(t + k).center for k in range(cfg.N)])
    c = pred.centers(u)
    dg = pred.delta_g
    out = {"upper": [], "lower": [], "width": []}
    for k in range(cfg.N):
        y_lo, y_hi = cfg.output_bounds(t + k + 1)
        for i in range(cfg.n_y):
            if 2 * dg[k][i] > y_hi[i] - y_lo[i]:
                out["width"].append((k + 1, i, float(2 * dg[k][i]), float(y_hi[i] - y_lo[i])))
            if c[k][i] + dg[k][i] > y_hi[i]:
                out["upper"].append((k + 1, i, float(c[k][i] + dg[k][i] - y_hi[i])))
            if c[k][i] - dg[k][i] < y_lo[i]:
                out["lower"].append((k + 1, i, float(y_lo[i] - c[k][i] + dg[k][i])))
    return out


def nzpc_step(window: DataWindow, y_now, cfg: NzpcConfig, dims: PlantDimensions,
              t: int = 0) -> StepResult:
    """Learn at the current output, predict, and solve the horizon QP.

    Raises InfeasibleStep (with diagnostics) unless the QP solves to optimality.
    """
    y_now = np.asarray(y_now, dtype=float).reshape(-1)
    Ry0 = Zonotope.point(y_now)
    model, ZL, Zeps = learn(window, y_now, cfg.reach, dims)
    pred = build_predictor(model, ZL, Zeps, Ry0, cfg.N, cfg.reach, dims)
    prob, layout = assemble_qp(pred, cfg, t)
    sol = solve_qp(prob, tol=cfg.qp_tol, max_iter=cfg.qp_max_iter)
    if sol.status != OPTIMAL:
        diag = diagnose(pred, cfg, t)
        diag["qp_status"] = sol.status
        diag["prim_res"] = sol.prim_res
        raise InfeasibleStep(f"horizon problem not solved at t={t}: {sol.status}", diag)
    inputs = layout.inputs(sol.x)
    sets = pred.sets(inputs)
    predicted = np.array([z.center + z.generators @ layout.beta(sol.x, k)
                          for k, z in enumerate(sets)])
    return StepResult(inputs[0].copy(), inputs, predicted, sets, sol.status, sol, pred, layout)


# -- closed loop ----------------------------------------------------------------

@dataclass
class StepRecord:
    t: int
    y: np.ndarray
    u: np.ndarray
    status: str
    iterations: int
    solve_ms: float
    predicted: Optional[np.ndarray] = None
    hulls: list = field(default_factory=list)      # IntervalVector per horizon step
    sets: list = field(default_factory=list)
    output_ok: bool = True
    input_ok: bool = True


@dataclass
class ClosedLoopLog:
    n_y: int
    n_u: int
    N: int
    records: list = field(default_factory=list)
    final_output: Optional[np.ndarray] = None
    aborted: Optional[str] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def outputs(self) -> np.ndarray:
        return np.array([r.y for r in self.records]).reshape(-1, self.n_y)

    @property
    def inputs(self) -> np.ndarray:
        return np.array([r.u for r in self.records]).reshape(-1, self.n_u)

    @property
    def violations(self) -> dict:
        return {
            "output": sum(not r.output_ok for r in self.records),
            "input": sum(not r.input_ok for r in self.records),
            "infeasible": sum(r.status != OPTIMAL for r in self.records),
        }

    @property
    def ok(self) -> bool:
        return self.aborted is None and not any(self.violations.values())

    def header(self) -> list[str]:
        h = ["step"] + [f"y_{i + 1}" for i in range(self.n_y)] + [f"u_{i + 1}" for i in range(self.n_u)]
        h += ["qp_status", "qp_iters", "solve_ms"]
        for k in range(1, self.N + 1):
            for i in range(self.n_y):
                h += [f"R{k}_lo_{i + 1}", f"R{k}_hi_{i + 1}"]
        return h

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.header())
            for r in self.records:
                row = [r.t, *map(repr, r.y.tolist()), *map(repr, r.u.tolist()),
                       r.status, r.iterations, f"{r.solve_ms:.3f}"]
                for k in range(self.N):
                    if k < len(r.hulls):
                        for i in range(self.n_y):
                            row += [repr(float(r.hulls[k].lower[i])), repr(float(r.hulls[k].upper[i]))]
                    else:
                        row += [""] * (2 * self.n_y)
                wr.writerow(row)

    def sets_dump(self) -> list:
        return [{"step": r.t, "sets": [z.to_dict() for z in r.sets],
                 "predicted": None if r.predicted is None else r.predicted.tolist()}
                for r in self.records]


def run_closed_loop(plant: PlantSimulator, cfg: NzpcConfig, initial_window: DataWindow,
                    x0, seed: Optional[int] = None, keep_sets: bool = False) -> ClosedLoopLog:
    """Apply the first optimal input, measure, slide the data window, repeat.

    Stops with `aborted` set when a horizon problem has no optimal solution,
    unless `cfg.fallback_hold` is set, in which case the previous input is
    held and the step is logged with the solver's status.
    """
    dims = plant.dims
    if cfg.n_y != dims.n_y or cfg.n_u != dims.n_u:
        raise DimensionError("controller and plant dimensions differ")
    sim = plant.clone(seed) if seed is not None else plant
    log = ClosedLoopLog(dims.n_y, dims.n_u, cfg.N)
    x = np.asarray(x0, dtype=float).reshape(-1)
    sim._monitor(x, "closed loop, t=0")
    y = sim.measure(x)
    window = initial_window
    u_prev = None
    for t in range(cfg.steps):
        y_lo, y_hi = cfg.output_bounds(t)
        out_ok = bool(np.all(y >= y_lo) and np.all(y <= y_hi))
        t0 = time.perf_counter()
        try:
            res = nzpc_step(window, y, cfg, dims, t)
        except InfeasibleStep as exc:
            ms = 1e3 * (time.perf_counter() - t0)
            log.diagnostics[t] = exc.diagnostics
            status = exc.diagnostics.get("qp_status", INFEASIBLE)
            if not cfg.fallback_hold or u_prev is None:
                log.records.append(StepRecord(t, y, np.full(dims.n_u, np.nan), status, 0, ms,
                                              output_ok=out_ok, input_ok=False))
                log.aborted = f"t={t}: {exc}"
                log.final_output = y
                return log
            u = u_prev
            rec = StepRecord(t, y, u, status, 0, ms, output_ok=out_ok,
                             input_ok=contains_point(cfg.input_set(t), u, 1e-9))
        else:
            ms = 1e3 * (time.perf_counter() - t0)
            u = res.u
            rec = StepRecord(t, y, u, res.status, res.qp.iterations, ms, res.predicted,
                             [z.interval() for z in res.sets], res.sets if keep_sets else [],
                             out_ok, contains_point(cfg.input_set(t), u, 1e-9))
        log.records.append(rec)
        x = sim.step(x, u)
        sim._monitor(x, f"closed loop, t={t + 1}")
        y_next = sim.measure(x)
        window = slide_window(window, u, y, y_next)
        y = y_next
        u_prev = u
    log.final_output = y
    return log
