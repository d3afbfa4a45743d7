"""Data-driven output reachability for unknown nonlinear systems.

The learning phase fits an affine model of y(k+1) around a linearization
point by least squares on noisy input-output data, bounds the fit residual
(model mismatch plus Taylor remainder) at the data points by the zonotope
Z_L, extends that bound to the whole domain with the Lipschitz box Z_eps,
and then propagates output reachable sets forward.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import DataWindow, PlantDimensions, RankError
from .sets import (
    DimensionError,
    IntervalVector,
    Zonotope,
    cartesian_product,
    from_interval,
    linear_map,
    reduce_order,
)

LSQ_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LinearizationPoint:
    y_star: np.ndarray
    v_star: np.ndarray
    u_star: np.ndarray
    x_star: np.ndarray
    xi_star: np.ndarray

    @classmethod
    def from_centers(cls, y_star, v_star, u_star, dims: PlantDimensions) -> "LinearizationPoint":
        y_star = np.asarray(y_star, dtype=float).reshape(-1)
        v_star = np.asarray(v_star, dtype=float).reshape(-1)
        u_star = np.asarray(u_star, dtype=float).reshape(-1)
        x_star = dims.H_pinv @ (y_star - v_star)
        return cls(y_star, v_star, u_star, x_star, np.concatenate([x_star, u_star]))


@dataclass(frozen=True, eq=False)
class LinearizedModel:
    Mhat: np.ndarray  # n_y x (1 + n_x + n_u), [m0 | A | B]
    point: LinearizationPoint

    @property
    def n_x(self) -> int:
        return self.point.x_star.size

    @property
    def m0(self) -> np.ndarray:
        return self.Mhat[:, 0]

    @property
    def A(self) -> np.ndarray:
        return self.Mhat[:, 1 : 1 + self.n_x]

    @property
    def B(self) -> np.ndarray:
        return self.Mhat[:, 1 + self.n_x :]


@dataclass(frozen=True, eq=False)
class ReachConfig:
    """Noise/input zonotopes and the constants that size Z_eps.

    `z_eps_override` replaces the Lipschitz box when set; `max_generators`
    enables box order reduction of every propagated set (off by default).
    """

    Zw: Zonotope
    Zv: Zonotope
    Zu: Zonotope
    Lf: np.ndarray
    delta: float = 0.0
    z_eps_override: Optional[Zonotope] = None
    max_generators: Optional[int] = None

    def __post_init__(self):
        Lf = np.asarray(self.Lf, dtype=float).reshape(-1)
        if np.any(Lf <= 0):
            raise ValueError("Lipschitz constants must be strictly positive")
        if self.delta < 0:
            raise ValueError("covering radius must be non-negative")
        object.__setattr__(self, "Lf", Lf)

    def check(self, dims: PlantDimensions) -> None:
        if self.Zw.dim != dims.n_x or self.Lf.size != dims.n_x:
            raise DimensionError("Zw / Lf must have the state dimension")
        if self.Zv.dim != dims.n_y:
            raise DimensionError("Zv must have the output dimension")
        if self.Zu.dim != dims.n_u:
            raise DimensionError("Zu must have the input dimension")
        if self.z_eps_override is not None and self.z_eps_override.dim != dims.n_y:
            raise DimensionError("Z_eps override must have the output dimension")


@dataclass(frozen=True, eq=False)
class ReachResult:
    model: LinearizedModel
    ZL: Zonotope
    Zeps: Zonotope
    initial: Zonotope
    output_sets: list = field(default_factory=list)
    state_sets: list = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.output_sets)

    def to_dict(self) -> dict:
        p = self.model.point
        return {
            "model": {
                "Mhat": self.model.Mhat.tolist(),
                "y_star": p.y_star.tolist(),
                "v_star": p.v_star.tolist(),
                "u_star": p.u_star.tolist(),
                "x_star": p.x_star.tolist(),
            },
            "ZL": self.ZL.to_dict(),
            "Zeps": self.Zeps.to_dict(),
            "initial": self.initial.to_dict(),
            "output_sets": [z.to_dict() for z in self.output_sets],
            "state_sets": [z.to_dict() for z in self.state_sets],
        }


def _regressor(w: DataWindow, point: LinearizationPoint, dims: PlantDimensions) -> np.ndarray:
    return np.vstack([
        np.ones((1, w.T)),
        dims.H_pinv @ (w.Yminus - point.y_star[:, None]),
        w.Uminus - point.u_star[:, None],
    ])


def estimate_model(w: DataWindow, point: LinearizationPoint, cfg: ReachConfig,
                   dims: PlantDimensions) -> LinearizedModel:
    """Least-squares estimate of [f_H(x*,u*) | A_H | B_H] from the window."""
    if w.T == 0:
        raise ValueError("empty data window")
    reg = _regressor(w, point, dims)
    s = np.linalg.svd(reg, compute_uv=False)
    rank = int(np.sum(s > LSQ_RANK_TOL * s[0]))
    if rank < reg.shape[0]:
        raise RankError(
            f"regressor of shape {reg.shape} has numerical rank {rank}; "
            "the data are not exciting enough"
        )
    # noise centers stacked over the window, i.e. the concatenated matrix-zonotope centers
    target = (w.Yplus
              - (dims.H @ cfg.Zw.center)[:, None]
              - cfg.Zv.center[:, None])
    Mhat_T, *_ = np.linalg.lstsq(reg.T, target.T, rcond=None)
    return LinearizedModel(Mhat_T.T.copy(), point)


def residual_interval(w: DataWindow, model: LinearizedModel, dims: PlantDimensions) -> IntervalVector:
    """Element-wise min/max over the window of y+ minus the model's linear part."""
    p = model.point
    x_dev = dims.H_pinv @ (w.Yminus - (p.y_star - p.v_star)[:, None])
    u_dev = w.Uminus - p.u_star[:, None]
    r = w.Yplus - model.A @ x_dev - model.B @ u_dev
    return IntervalVector(r.min(axis=1), r.max(axis=1))


def compute_ZL(w: DataWindow, model: LinearizedModel, cfg: ReachConfig,
               dims: PlantDimensions) -> Zonotope:
    if w.T == 0:
        raise ValueError("empty data window")
    box = from_interval(residual_interval(w, model, dims))
    Hp = dims.H_pinv
    state_part = linear_map(-Hp, cfg.Zv) + linear_map(dims.g_eta, dims.Z_eta)
    stacked = cartesian_product(
        Zonotope.point([1.0]),
        cartesian_product(state_part, Zonotope.point(np.zeros(dims.n_u))),
    )
    return box - linear_map(model.Mhat, stacked) - linear_map(dims.H, cfg.Zw) - cfg.Zv


def compute_Zeps(cfg: ReachConfig, dims: PlantDimensions) -> Zonotope:
    if cfg.z_eps_override is not None:
        return cfg.z_eps_override
    half = (np.abs(dims.H) @ cfg.Lf) * cfg.delta / 2.0
    return Zonotope(np.zeros(dims.n_y), np.diag(half))


def reach_step(Ry: Zonotope, input_set: Zonotope, model: LinearizedModel, ZL: Zonotope,
               Zeps: Zonotope, cfg: ReachConfig, dims: PlantDimensions) -> tuple[Zonotope, Zonotope]:
    """One step of the recursion; returns (state set, next output set)."""
    if Ry.dim != dims.n_y or input_set.dim != dims.n_u:
        raise DimensionError("output set / input set dimension mismatch")
    Rx = linear_map(dims.H_pinv, Ry - cfg.Zv) + linear_map(dims.g_eta, dims.Z_eta)
    xi = cartesian_product(Rx, input_set) - model.point.xi_star
    ext = cartesian_product(Zonotope.point([1.0]), xi)
    Ry_next = (linear_map(model.Mhat, ext) + cfg.Zv + linear_map(dims.H, cfg.Zw)
               + ZL + Zeps)
    if cfg.max_generators is not None:
        Ry_next = reduce_order(Ry_next, cfg.max_generators)
    return Rx, Ry_next


def learn(w: DataWindow, y_star, cfg: ReachConfig, dims: PlantDimensions):
    """Learning phase: (model, Z_L, Z_eps) linearized at y*, c_v, c_u."""
    cfg.check(dims)
    point = LinearizationPoint.from_centers(y_star, cfg.Zv.center, cfg.Zu.center, dims)
    model = estimate_model(w, point, cfg, dims)
    return model, compute_ZL(w, model, cfg, dims), compute_Zeps(cfg, dims)


def reach_horizon(w: DataWindow, Ry0: Zonotope, N: int, cfg: ReachConfig,
                  dims: PlantDimensions) -> ReachResult:
    if N < 1:
        raise ValueError("horizon must be at least 1")
    model, ZL, Zeps = learn(w, Ry0.center, cfg, dims)
    outputs, states = [], []
    Ry = Ry0
    for _ in range(N):
        Rx, Ry = reach_step(Ry, cfg.Zu, model, ZL, Zeps, cfg, dims)
        states.append(Rx)
        outputs.append(Ry)
    return ReachResult(model, ZL, Zeps, Ry0, outputs, states)
