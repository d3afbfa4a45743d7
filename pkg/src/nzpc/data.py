"""Trajectories, stacked data windows and the output-to-state zonotope."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .sets import DimensionError, Zonotope

RANK_TOL = 1e-10


class RankError(ValueError):
    """A matrix that must have full row rank does not."""


def pseudo_right_inverse(H) -> np.ndarray:
    """Right inverse H^T (H H^T)^-1 of a full-row-rank matrix."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    s = np.linalg.svd(H, compute_uv=False)
    rank = int(np.sum(s > RANK_TOL * max(s[0], 1.0))) if s.size else 0
    if rank < H.shape[0]:
        raise RankError(f"matrix of shape {H.shape} has rank {rank} < {H.shape[0]}")
    return H.T @ np.linalg.inv(H @ H.T)


@dataclass(frozen=True, eq=False)
class PlantDimensions:
    n_x: int
    n_u: int
    n_y: int
    H: np.ndarray
    eta: float

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if H.shape != (self.n_y, self.n_x):
            raise DimensionError(f"H has shape {H.shape}, expected {(self.n_y, self.n_x)}")
        if self.n_y > self.n_x:
            raise DimensionError("more outputs than states")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        H_pinv = pseudo_right_inverse(H)
        H.setflags(write=False)
        H_pinv.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "_H_pinv", H_pinv)

    @property
    def H_pinv(self) -> np.ndarray:
        return self._H_pinv

    @property
    def g_eta(self) -> np.ndarray:
        """Projector I - H^+ H onto the unobservable directions."""
        return np.eye(self.n_x) - self.H_pinv @ self.H

    @property
    def Z_eta(self) -> Zonotope:
        return Zonotope(np.zeros(self.n_x), self.eta * np.eye(self.n_x))


@dataclass(frozen=True, eq=False)
class Trajectory:
    inputs: np.ndarray   # (L+1, n_u)
    outputs: np.ndarray  # (L+1, n_y)
    id: str = "0"

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        if u.shape[0] != y.shape[0]:
            raise ValueError(f"{u.shape[0]} inputs but {y.shape[0]} outputs")
        if u.shape[0] < 2:
            raise ValueError("a trajectory needs at least two samples")
        u.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "outputs", y)

    def __len__(self):
        return self.outputs.shape[0]


@dataclass(frozen=True, eq=False)
class DataWindow:
    """Successor-paired data matrices Y+, Y-, U-.

    Column j of `Yplus` is the one-step successor of column j of `Yminus`
    inside the same trajectory; `source` records the trajectory id of each
    column.
    """

    Yplus: np.ndarray
    Yminus: np.ndarray
    Uminus: np.ndarray
    source: tuple = field(default=())

    def __post_init__(self):
        arrs = []
        for a in (self.Yplus, self.Yminus, self.Uminus):
            a = np.atleast_2d(np.array(a, dtype=float))
            a.setflags(write=False)
            arrs.append(a)
        yp, ym, um = arrs
        T = yp.shape[1]
        if ym.shape != yp.shape or um.shape[1] != T:
            raise DimensionError("window matrices must share the column count")
        src = tuple(self.source) if self.source else ("?",) * T
        if len(src) != T:
            raise DimensionError("source labels do not match the column count")
        object.__setattr__(self, "Yplus", yp)
        object.__setattr__(self, "Yminus", ym)
        object.__setattr__(self, "Uminus", um)
        object.__setattr__(self, "source", src)

    @property
    def T(self) -> int:
        return self.Yplus.shape[1]

    @property
    def n_y(self) -> int:
        return self.Yplus.shape[0]

    @property
    def n_u(self) -> int:
        return self.Uminus.shape[0]

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(u, y, y_next) of column j."""
        return self.Uminus[:, j].copy(), self.Yminus[:, j].copy(), self.Yplus[:, j].copy()


def build_window(trajectories: Sequence[Trajectory]) -> DataWindow:
    if not trajectories:
        raise ValueError("no trajectories given")
    yp, ym, um, src = [], [], [], []
    for tr in trajectories:
        ym.append(tr.outputs[:-1].T)
        yp.append(tr.outputs[1:].T)
        um.append(tr.inputs[:-1].T)
        src.extend([tr.id] * (len(tr) - 1))
    return DataWindow(np.hstack(yp), np.hstack(ym), np.hstack(um), tuple(src))


def slide_window(w: DataWindow, new_input, prev_output, new_output,
                 label: str = "online") -> DataWindow:
    """Drop the oldest transition and append prev_output -> new_output under new_input."""
    if w.T == 0:
        raise ValueError("cannot slide an empty window")
    u = np.asarray(new_input, dtype=float).reshape(-1)
    y0 = np.asarray(prev_output, dtype=float).reshape(-1)
    y1 = np.asarray(new_output, dtype=float).reshape(-1)
    if u.size != w.n_u or y0.size != w.n_y or y1.size != w.n_y:
        raise DimensionError("new column does not match the window dimensions")
    return DataWindow(
        np.hstack([w.Yplus[:, 1:], y1[:, None]]),
        np.hstack([w.Yminus[:, 1:], y0[:, None]]),
        np.hstack([w.Uminus[:, 1:], u[:, None]]),
        w.source[1:] + (label,),
    )


def state_from_output(y, Zv: Zonotope, dims: PlantDimensions) -> Zonotope:
    """Zonotope of all states consistent with the measured output y.

    Center H^+(y - c_v), generators [H^+ G_v, eta (I - H^+ H)].
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != dims.n_y or Zv.dim != dims.n_y:
        raise DimensionError("output / noise dimension does not match H")
    Hp = dims.H_pinv
    return Zonotope(
        Hp @ (y - Zv.center),
        np.hstack([Hp @ Zv.generators, dims.eta * dims.g_eta]),
    )


# -- CSV ---------------------------------------------------------------------

def write_trajectories_csv(path, trajectories: Iterable[Trajectory]) -> None:
    trajectories = list(trajectories)
    n_u = trajectories[0].inputs.shape[1]
    n_y = trajectories[0].outputs.shape[1]
    header = ["traj_id", "k"] + [f"u_{i + 1}" for i in range(n_u)] + [f"y_{i + 1}" for i in range(n_y)]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for tr in trajectories:
            for k in range(len(tr)):
                wr.writerow([tr.id, k, *map(repr, tr.inputs[k].tolist()),
                             *map(repr, tr.outputs[k].tolist())])


def read_trajectories_csv(path) -> list[Trajectory]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or header[:2] != ["traj_id", "k"]:
            raise ValueError(f"{path}: missing 'traj_id,k,...' header row")
        u_cols = [i for i, h in enumerate(header) if h.startswith("u_")]
        y_cols = [i for i, h in enumerate(header) if h.startswith("y_")]
        rows: dict[str, list] = {}
        for row in rd:
            if not row:
                continue
            rows.setdefault(row[0], []).append(row)
    out = []
    for tid, rs in rows.items():
        rs.sort(key=lambda r: int(r[1]))
        u = [[float(r[i]) for i in u_cols] for r in rs]
        y = [[float(r[i]) for i in y_cols] for r in rs]
        out.append(Trajectory(np.array(u), np.array(y), tid))
    return out


def write_states_csv(path, ids: Sequence[str], states: Sequence[np.ndarray]) -> None:
    n_x = states[0].shape[1]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["traj_id", "k"] + [f"x_{i + 1}" for i in range(n_x)])
        for tid, xs in zip(ids, states):
            for k, x in enumerate(xs):
                wr.writerow([tid, k, *map(repr, x.tolist())])


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
