"""Zonotopes, matrix zonotopes and interval vectors.

All set objects are immutable: arrays are copied on construction and marked
read-only, so a set can be shared freely between the learning phase, the
predictor and the verification harness.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog


class DimensionError(ValueError):
    """Operands have incompatible dimensions."""


class ContainmentError(RuntimeError):
    """The containment LP could not be solved (distinct from 'not contained')."""


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if ndim == 1:
        arr = arr.reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class IntervalVector:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = _frozen(self.lower, 1), _frozen(self.upper, 1)
        if lo.shape != hi.shape:
            raise DimensionError(f"bounds of length {lo.size} and {hi.size}")
        if np.any(lo > hi):
            raise ValueError("interval lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def radius(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def contains(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def __repr__(self):
        return f"IntervalVector(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


@dataclass(frozen=True, eq=False)
class Zonotope:
    """The set {c + G b : |b|_inf <= 1}; zero generators encode a point."""

    center: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        c = _frozen(self.center, 1)
        g = np.array(self.generators, dtype=float)
        if g.size == 0:
            g = np.zeros((c.size, 0))
        elif g.ndim == 1:
            g = g.reshape(-1, 1)
        if g.shape[0] != c.size:
            raise DimensionError(
                f"center has dimension {c.size} but generators have {g.shape[0]} rows"
            )
        g.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "generators", g)

    # keep numpy from broadcasting `A @ Z` element-wise
    __array_ufunc__ = None

    @classmethod
    def point(cls, p) -> "Zonotope":
        p = np.asarray(p, dtype=float).reshape(-1)
        return cls(p, np.zeros((p.size, 0)))

    @classmethod
    def box(cls, center, halfwidths) -> "Zonotope":
        """Axis-aligned box with the given center and half-widths."""
        return cls(center, np.diag(np.asarray(halfwidths, dtype=float).reshape(-1)))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def num_generators(self) -> int:
        return self.generators.shape[1]

    def __add__(self, other):
        if isinstance(other, Zonotope):
            return minkowski_sum(self, other)
        return translate(self, other)

    __radd__ = __add__

    def __neg__(self):
        return Zonotope(-self.center, -self.generators)

    def __sub__(self, other):
        if isinstance(other, Zonotope):
            return minkowski_sum(self, -other)
        return translate(self, -np.asarray(other, dtype=float))

    def __rmatmul__(self, L):
        return linear_map(L, self)

    def interval(self) -> IntervalVector:
        return to_interval(self)

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "generators": self.generators.T.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Zonotope":
        c = np.asarray(d["center"], dtype=float)
        cols = d.get("generators") or []
        g = np.asarray(cols, dtype=float).T if cols else np.zeros((c.size, 0))
        return cls(c, g)

    def __repr__(self):
        return f"Zonotope(center={self.center.tolist()}, generators={self.generators.tolist()})"


@dataclass(frozen=True, eq=False)
class MatrixZonotope:
    center: np.ndarray
    generators: tuple

    def __post_init__(self):
        c = _frozen(self.center, 2)
        gens = []
        for g in self.generators:
            g = _frozen(g, 2)
            if g.shape != c.shape:
                raise DimensionError(f"generator of shape {g.shape}, center {c.shape}")
            gens.append(g)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "generators", tuple(gens))

    @property
    def shape(self) -> tuple:
        return self.center.shape

    @property
    def num_generators(self) -> int:
        return len(self.generators)

    def sample(self, beta) -> np.ndarray:
        out = np.array(self.center)
        for b, g in zip(beta, self.generators):
            out = out + b * g
        return out


def _check_same_dim(a: Zonotope, b: Zonotope):
    if a.dim != b.dim:
        raise DimensionError(f"dimension {a.dim} vs {b.dim}")


def minkowski_sum(a: Zonotope, b: Zonotope) -> Zonotope:
    _check_same_dim(a, b)
    return Zonotope(a.center + b.center, np.hstack([a.generators, b.generators]))


def translate(z: Zonotope, v) -> Zonotope:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != z.dim:
        raise DimensionError(f"shift of length {v.size} for a {z.dim}-dim zonotope")
    return Zonotope(z.center + v, z.generators)


def linear_map(L, z: Zonotope) -> Zonotope:
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[1] != z.dim:
        raise DimensionError(f"map with {L.shape[1]} columns on a {z.dim}-dim zonotope")
    return Zonotope(L @ z.center, L @ z.generators)


def cartesian_product(a: Zonotope, b: Zonotope) -> Zonotope:
    g = np.zeros((a.dim + b.dim, a.num_generators + b.num_generators))
    g[: a.dim, : a.num_generators] = a.generators
    g[a.dim :, a.num_generators :] = b.generators
    return Zonotope(np.concatenate([a.center, b.center]), g)


def to_interval(z: Zonotope) -> IntervalVector:
    dg = np.abs(z.generators).sum(axis=1)
    return IntervalVector(z.center - dg, z.center + dg)


def from_interval(i: IntervalVector) -> Zonotope:
    """Box zonotope of an interval; zero-width dimensions get no generator."""
    if not isinstance(i, IntervalVector):
        i = IntervalVector(*i)
    r = i.radius
    keep = r > 0
    return Zonotope(i.center, np.diag(r)[:, keep])


def _tol_scale(z: Zonotope, p: np.ndarray) -> float:
    mags = [1.0, np.max(np.abs(p), initial=0.0), np.max(np.abs(z.center), initial=0.0)]
    if z.num_generators:
        mags.append(np.max(np.abs(z.generators)))
    return max(mags)


def containment_margin(z: Zonotope, p, tol: float = 1e-9) -> float:
    """1 - min |b|_inf over all b with c + G b = p.

    Non-negative iff p lies in z; -inf when p is off the affine hull of z.
    Solved as an LP over (b, t): minimize t subject to G b = p - c and
    |b_i| <= t. The equality is posed exactly (not as a thin band, which
    the LP presolve can misjudge) and the solver's own feasibility
    tolerance absorbs rounding; `tol` is only used for generator-free sets.
    """
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size != z.dim:
        raise DimensionError(f"point of length {p.size} for a {z.dim}-dim zonotope")
    d = p - z.center
    g = z.generators
    gamma = g.shape[1]
    if gamma == 0:
        band = tol * _tol_scale(z, p)
        return 1.0 if np.max(np.abs(d), initial=0.0) <= band else -np.inf

    cost = np.zeros(gamma + 1)
    cost[-1] = 1.0
    eye = np.eye(gamma)
    ones = np.ones((gamma, 1))
    a_eq = np.hstack([g, np.zeros((z.dim, 1))])
    a_ub = np.vstack([np.hstack([eye, -ones]), np.hstack([-eye, -ones])])
    bounds = [(None, None)] * gamma + [(0, None)]
    res = linprog(cost, A_ub=a_ub, b_ub=np.zeros(2 * gamma), A_eq=a_eq, b_eq=d,
                  bounds=bounds, method="highs")
    if res.status == 2:
        return -np.inf
    if res.status != 0:
        raise ContainmentError(f"containment LP failed: {res.message}")
    return 1.0 - float(res.x[-1])


def contains_point(z: Zonotope, p, tol: float = 1e-9) -> bool:
    """True iff p = c + G b for some |b|_inf <= 1 + tol (equality up to a scaled band)."""
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size == z.dim and z.num_generators:
        # cheap rejection through the interval hull
        band = tol * _tol_scale(z, p)
        if np.any(np.abs(p - z.center) > np.abs(z.generators).sum(axis=1) * (1 + tol) + band):
            return False
    return containment_margin(z, p, tol) >= -tol


def reduce_order(z: Zonotope, max_generators: int) -> Zonotope:
    """Box-method order reduction.

    Keeps the `max_generators - dim` longest generators and encloses the
    rest in an axis-aligned box, so the result has at most `max_generators`
    generators and contains `z`.
    """
    if max_generators < z.dim:
        raise ValueError("max_generators must be at least the dimension")
    if z.num_generators <= max_generators:
        return z
    g = z.generators
    score = np.linalg.norm(g, axis=0)
    order = np.argsort(score)
    n_keep = max_generators - z.dim
    reduced = g[:, order[: g.shape[1] - n_keep]]
    kept = g[:, order[g.shape[1] - n_keep :]]
    box = np.diag(np.abs(reduced).sum(axis=1))
    return Zonotope(z.center, np.hstack([kept, box]))


def concat_noise_zonotope(z: Zonotope, T: int) -> MatrixZonotope:
    """Matrix zonotope bounding T stacked independent realizations of z."""
    if T < 1:
        raise ValueError("T must be at least 1")
    center = np.tile(z.center.reshape(-1, 1), (1, T))
    gens = []
    for j in range(T):
        for i in range(z.num_generators):
            g = np.zeros((z.dim, T))
            g[:, j] = z.generators[:, i]
            gens.append(g)
    return MatrixZonotope(center, tuple(gens))

