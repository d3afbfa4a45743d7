"""Dense operator-splitting QP solver.

Solves

    minimize    1/2 x'Px + q'x
    subject to  l <= Ax <= u

with the ADMM splitting used by OSQP: Ruiz equilibration, over-relaxed
alternating steps, adaptive step size, an active-set polishing step for
high-accuracy solutions, and a primal infeasibility certificate built from
successive dual iterates.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

OPTIMAL = "optimal"
MAX_ITER = "maxIterations"
INFEASIBLE = "infeasible"

INF = 1e20
RHO_MIN, RHO_MAX = 1e-6, 1e6
RHO_EQ_SCALE = 1e3


@dataclass(frozen=True, eq=False)
class QpProblem:
    hessian: np.ndarray
    linear: np.ndarray
    ineq_matrix: np.ndarray
    ineq_lower: np.ndarray
    ineq_upper: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        n = P.shape[0]
        q = np.asarray(self.linear, dtype=float).reshape(-1)
        A = np.asarray(self.ineq_matrix, dtype=float).reshape(-1, n)
        l = np.asarray(self.ineq_lower, dtype=float).reshape(-1)
        u = np.asarray(self.ineq_upper, dtype=float).reshape(-1)
        if P.shape != (n, n) or q.size != n or l.size != A.shape[0] or u.size != A.shape[0]:
            raise ValueError("inconsistent QP dimensions")
        if np.any(l > u):
            raise ValueError("constraint lower bound exceeds upper bound")
        P = 0.5 * (P + P.T)
        for name, val in (("hessian", P), ("linear", q), ("ineq_matrix", A),
                          ("ineq_lower", l), ("ineq_upper", u)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.linear.size

    @property
    def m(self) -> int:
        return self.ineq_lower.size

    def objective(self, x) -> float:
        return float(0.5 * x @ self.hessian @ x + self.linear @ x)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.hessian)[0]) if self.n else 0.0


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: str
    iterations: int
    prim_res: float
    dual_res: float
    objective: float
    polished: bool = False
    solve_time: float = 0.0
    info: dict = field(default_factory=dict)


class _Scaled:
    """Ruiz-equilibrated copy of the problem: x = D xs, y = E ys / c."""

    def __init__(self, prob: QpProblem, iters: int = 15):
        P, q, A = prob.hessian.copy(), prob.linear.copy(), prob.ineq_matrix.copy()
        l = np.clip(prob.ineq_lower, -INF, INF)
        u = np.clip(prob.ineq_upper, -INF, INF)
        n, m = prob.n, prob.m
        D, E = np.ones(n), np.ones(m)
        c = 1.0
        for _ in range(iters):
            col = np.maximum(np.abs(P).max(axis=0, initial=0.0),
                             np.abs(A).max(axis=0, initial=0.0) if m else 0.0)
            row = np.abs(A).max(axis=1, initial=0.0) if m else np.zeros(0)
            dD = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
            dD[col < 1e-12] = 1.0
            dE = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
            dE[row < 1e-12] = 1.0
            P = dD[:, None] * P * dD[None, :]
            A = dE[:, None] * A * dD[None, :]
            q = dD * q
            D *= dD
            E *= dE
            # cost scaling
            mean_col = np.abs(P).max(axis=0, initial=0.0).mean() if n else 1.0
            gamma = 1.0 / np.clip(max(mean_col, np.abs(q).max(initial=0.0)), 1e-4, 1e4)
            P *= gamma
            q *= gamma
            c *= gamma
        self.P, self.q, self.A = P, q, A
        self.l = np.where(prob.ineq_lower <= -INF, -INF, E * l)
        self.u = np.where(prob.ineq_upper >= INF, INF, E * u)
        self.D, self.E, self.c = D, E, c


def _residuals(prob: QpProblem, x, y):
    Ax = prob.ineq_matrix @ x
    z = np.clip(Ax, prob.ineq_lower, prob.ineq_upper)
    prim = float(np.max(np.abs(Ax - z), initial=0.0))
    Px = prob.hessian @ x
    Aty = prob.ineq_matrix.T @ y
    dual = float(np.max(np.abs(Px + prob.linear + Aty), initial=0.0))
    prim_scale = max(np.max(np.abs(Ax), initial=0.0), np.max(np.abs(z), initial=0.0))
    dual_scale = max(np.max(np.abs(Px), initial=0.0), np.max(np.abs(Aty), initial=0.0),
                     np.max(np.abs(prob.linear), initial=0.0))
    return prim, dual, prim_scale, dual_scale


def _dual_sign_ok(prob: QpProblem, x, y, tol) -> bool:
    """Multipliers must point outward and vanish on inactive rows."""
    Ax = prob.ineq_matrix @ x
    l, u = prob.ineq_lower, prob.ineq_upper
    scale = max(1.0, np.max(np.abs(y), initial=0.0))
    gap_l = np.where(np.isfinite(l), Ax - l, np.inf)
    gap_u = np.where(np.isfinite(u), u - Ax, np.inf)
    slack = tol * max(1.0, np.max(np.abs(Ax), initial=0.0))
    bad_pos = (y > tol * scale) & (gap_u > slack)
    bad_neg = (y < -tol * scale) & (gap_l > slack)
    return not (np.any(bad_pos) or np.any(bad_neg))


def _converged(prob, x, y, tol):
    prim, dual, ps, ds = _residuals(prob, x, y)
    ok = prim <= tol + tol * ps and dual <= tol + tol * ds
    return ok, prim, dual


def _polish(prob: QpProblem, sc: _Scaled, xs, zs, ys, delta=1e-7, refine=8, rounds=10):
    """Guess the active set from the ADMM iterate and solve the reduced KKT system.

    The guess is corrected a few times: rows the reduced solution violates are
    added at the violated bound, rows whose multiplier has the wrong sign are
    dropped.
    """
    eq = np.isclose(sc.l, sc.u)
    # rows the projection holds at a bound count as active too, which pins
    # directions the Hessian leaves free
    lower = ((zs - sc.l < -ys) | (zs <= sc.l)) & (sc.l > -INF) & ~eq
    upper = ((sc.u - zs < ys) | (zs >= sc.u)) & (sc.u < INF) & ~eq
    n = sc.P.shape[0]
    for _ in range(rounds):
        idx = np.flatnonzero(lower | upper | eq)
        rhs_b = np.where(upper[idx], sc.u[idx], sc.l[idx])
        Ared = sc.A[idx]
        k = idx.size
        K = np.zeros((n + k, n + k))
        K[:n, :n] = sc.P
        K[:n, n:] = Ared.T
        K[n:, :n] = Ared
        Kreg = K.copy()
        Kreg[:n, :n] += delta * np.eye(n)
        Kreg[n:, n:] -= delta * np.eye(k)
        rhs = np.concatenate([-sc.q, rhs_b])
        try:
            lu = sla.lu_factor(Kreg, check_finite=False)
        except (ValueError, sla.LinAlgError):
            return None
        sol = sla.lu_solve(lu, rhs, check_finite=False)
        for _ in range(refine):
            sol = sol + sla.lu_solve(lu, rhs - K @ sol, check_finite=False)
        if not np.all(np.isfinite(sol)):
            return None
        x_s = sol[:n]
        y_s = np.zeros(sc.A.shape[0])
        y_s[idx] = sol[n:]
        Ax = sc.A @ x_s
        scale = max(1.0, np.max(np.abs(Ax), initial=0.0))
        over = (Ax > sc.u + 1e-9 * scale) & ~upper & ~eq
        under = (Ax < sc.l - 1e-9 * scale) & ~lower & ~eq
        ytol = 1e-9 * max(1.0, np.max(np.abs(y_s), initial=0.0))
        wrong = (upper & (y_s < -ytol)) | (lower & (y_s > ytol))
        if not (np.any(over) or np.any(under) or np.any(wrong)):
            break
        upper = (upper & ~wrong) | over
        lower = (lower & ~wrong) | under
    return sc.D * x_s, sc.E * y_s / sc.c


def solve_qp(prob: QpProblem, tol: float = 1e-6, max_iter: int = 20000, *,
             rho: float = 0.1, sigma: float = 1e-6, alpha: float = 1.6,
             check_every: int = 25, polish: bool = True, eps_pinf: float = 1e-6,
             warm_start: Optional[tuple] = None) -> QpSolution:
    """Solve the QP; status is 'optimal', 'maxIterations' or 'infeasible'.

    At 'optimal' the primal residual |Ax - proj(Ax)|_inf and the dual
    residual |Px + q + A'y|_inf are below tol (absolute plus tol-relative).
    At 'maxIterations' the best iterate seen is returned with its residuals.
    """
    t0 = time.perf_counter()
    if prob.min_eigenvalue() < -1e-10:
        raise ValueError("QP hessian is not positive semidefinite")
    n, m = prob.n, prob.m
    sc = _Scaled(prob)
    eq_rows = np.isclose(sc.l, sc.u)

    def rho_vec(r):
        v = np.full(m, r)
        v[eq_rows] = r * RHO_EQ_SCALE
        v[(sc.l <= -INF) & (sc.u >= INF)] = RHO_MIN
        return v

    def factor(r):
        rv = rho_vec(r)
        M = sc.P + sigma * np.eye(n) + sc.A.T @ (rv[:, None] * sc.A)
        return rv, sla.cho_factor(M, check_finite=False)

    xs = np.zeros(n)
    ys = np.zeros(m)
    if warm_start is not None:
        xs = warm_start[0] / sc.D
        if warm_start[1] is not None:
            ys = warm_start[1] * sc.c / sc.E
    zs = np.clip(sc.A @ xs, sc.l, sc.u)
    rv, chol = factor(rho)

    best = None
    status = MAX_ITER
    it = 0
    info = {}
    for it in range(1, max_iter + 1):
        ys_prev = ys
        rhs = sigma * xs - sc.q + sc.A.T @ (rv * zs - ys)
        xt = sla.cho_solve(chol, rhs, check_finite=False)
        zt = sc.A @ xt
        xs = alpha * xt + (1 - alpha) * xs
        zr = alpha * zt + (1 - alpha) * zs
        zs = np.clip(zr + ys / rv, sc.l, sc.u)
        ys = ys + rv * (zr - zs)

        if it % check_every and it != max_iter:
            continue

        x = sc.D * xs
        y = sc.E * ys / sc.c
        ok, prim, dual = _converged(prob, x, y, tol)
        if best is None or max(prim, dual) < max(best[2], best[3]):
            best = (x, y, prim, dual, False)

        # polishing is tried first: the ADMM iterate only meets tol, the polished one is exact
        if polish and m:
            pol = _polish(prob, sc, xs, zs, ys)
            if pol is not None:
                okp, primp, dualp = _converged(prob, pol[0], pol[1], tol)
                if okp and _dual_sign_ok(prob, pol[0], pol[1], tol):
                    best = (pol[0], pol[1], primp, dualp, True)
                    status = OPTIMAL
                    break
        if ok and _dual_sign_ok(prob, x, y, tol):
            status = OPTIMAL
            break

        # primal infeasibility certificate from the change in duals
        dy = ys - ys_prev
        ndy = np.max(np.abs(dy), initial=0.0)
        if ndy > 1e-12:
            Atdy = np.max(np.abs(sc.A.T @ dy), initial=0.0)
            up = np.where(dy > 0, np.where(sc.u >= INF, np.inf, sc.u * dy), 0.0)
            lo = np.where(dy < 0, np.where(sc.l <= -INF, np.inf, sc.l * dy), 0.0)
            support = up.sum() + lo.sum()
            if Atdy <= eps_pinf * ndy and support <= -eps_pinf * ndy:
                status = INFEASIBLE
                info["certificate"] = (sc.E * dy / sc.c) / (ndy or 1.0)
                break

        # adaptive step size
        Ax = sc.A @ xs
        r_p = np.max(np.abs(Ax - zs), initial=0.0) / max(np.max(np.abs(Ax), initial=0.0),
                                                          np.max(np.abs(zs), initial=0.0), 1e-10)
        r_d = np.max(np.abs(sc.P @ xs + sc.q + sc.A.T @ ys), initial=0.0) / max(
            np.max(np.abs(sc.P @ xs), initial=0.0), np.max(np.abs(sc.A.T @ ys), initial=0.0),
            np.max(np.abs(sc.q), initial=0.0), 1e-10)
        new_rho = float(np.clip(rho * np.sqrt(r_p / max(r_d, 1e-10)), RHO_MIN, RHO_MAX))
        if new_rho > 5 * rho or new_rho < 0.2 * rho:
            rho = new_rho
            rv, chol = factor(rho)

    if status == INFEASIBLE:
        x, y = sc.D * xs, sc.E * ys / sc.c
        prim, dual, *_ = _residuals(prob, x, y)
        polished = False
    else:
        x, y, prim, dual, polished = best
    return QpSolution(x, y, status, it, prim, dual, prob.objective(x), polished,
                      time.perf_counter() - t0, info)
