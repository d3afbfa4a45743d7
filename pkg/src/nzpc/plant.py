"""Ground-truth plants, noise sampling and Monte-Carlo containment checks.

Ground-truth states never leave this module unless a caller explicitly asks
for them with ``record=True``; the learning and control code only ever sees
inputs and noisy outputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data import PlantDimensions, Trajectory
from .sets import DimensionError, Zonotope, containment_margin


class PlantDomainError(ArithmeticError):
    """The dynamics were evaluated outside their domain or overflowed."""


class AssumptionViolation(RuntimeError):
    """A simulated state left the box |x|_inf <= eta."""


# -- CSTR benchmark -------------------------------------------------------------

@dataclass(frozen=True)
class CstrParams:
    """Constants of the printed CSTR expressions.

    ``exp_arg_max`` saturates the argument of exp(beta / x2) from above. It is
    None by default, i.e. the expressions are evaluated as printed; see
    docs/cstr_exponential.md for why the printed form is unusable as a plant.
    """

    tau: float = 0.015
    alpha: float = 7.2e10
    beta: float = -8750.0
    rho: float = 1.5e13
    exp_arg_max: Optional[float] = None

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")


def cstr_step(x, u, p: CstrParams = CstrParams()) -> np.ndarray:
    """The printed two-state CSTR map f(x, u), without noise."""
    x1, x2 = float(x[0]), float(x[1])
    u1, u2 = float(u[0]), float(u[1])
    if x2 == 0.0:
        raise PlantDomainError("x2 = 0: exponent beta/x2 is undefined")
    arg = p.beta / x2
    if p.exp_arg_max is not None:
        arg = min(arg, p.exp_arg_max)
    try:
        e = math.exp(arg)
    except OverflowError as exc:
        raise PlantDomainError(f"exp(beta/x2) overflows: beta/x2 = {arg:.6g}") from exc
    tau = p.tau
    f1 = ((1 - 0.5 * tau - p.alpha * e * tau) * x1 + tau) / (1 + 0.5 * tau) + u1 * tau
    f2 = (((1 - 1.5 * tau) * x2 + p.rho * x1 * e) / (1 + 1.5 * tau)
          + tau * (350 - 6.3 * x1 - 14.4 * x2) / (1 + 1.5 * tau) + u2 * tau)
    for name, val in (("f1", f1), ("f2", f2)):
        if not math.isfinite(val):
            raise PlantDomainError(f"{name} is not finite at x={[x1, x2]}, u={[u1, u2]}")
    return np.array([f1, f2])


@dataclass(frozen=True)
class CstrDeviationParams:
    """Physical CSTR constants in deviation coordinates.

    States are (C_A - c_a0, T - t_0). ``k0`` and ``e_over_r`` are alpha and
    -beta of the printed model; ``heat_gain`` = -dH k0 / (rho_m Cp) is its rho.
    The coolant temperature carries the stabilizing feedback
    t_c0 + k1 x1 + k2 x2, whose scaled gains give the printed 6.3 and 14.4.
    """

    tau: float = 0.015
    k0: float = 7.2e10
    e_over_r: float = 8750.0
    heat_gain: float = 5e4 * 7.2e10 / (1000 * 0.239)
    q_over_v: float = 1.0
    ua_over_vrhocp: float = 5e4 / (100 * 1000 * 0.239)
    c_af: float = 1.0
    t_f: float = 350.0
    c_a0: float = 0.5
    t_0: float = 350.0
    t_c0: float = 300.0
    k1: float = -3.0
    k2: float = -6.9


def cstr_deviation_step(x, u, p: CstrDeviationParams = CstrDeviationParams()) -> np.ndarray:
    c = float(x[0]) + p.c_a0
    temp = float(x[1]) + p.t_0
    if temp <= 0.0:
        raise PlantDomainError(f"absolute temperature {temp} is not positive")
    tau = p.tau
    e = math.exp(-p.e_over_r / temp)
    f1 = ((1 - 0.5 * tau * p.q_over_v - p.k0 * tau * e) * c + p.q_over_v * p.c_af * tau) \
        / (1 + 0.5 * tau * p.q_over_v) + float(u[0]) * tau - p.c_a0
    a = 0.5 * tau * p.q_over_v + 0.5 * tau * p.ua_over_vrhocp
    coolant = p.t_c0 + p.k1 * float(x[0]) + p.k2 * float(x[1])
    f2 = (temp * (1 - a)
          + tau * (p.t_f * p.q_over_v + p.ua_over_vrhocp * coolant)
          + tau * p.heat_gain * c * e) / (1 + a) + float(u[1]) * tau - p.t_0
    return np.array([f1, f2])


def linear_dynamics(A, B, offset=None) -> Callable:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    off = np.zeros(A.shape[0]) if offset is None else np.asarray(offset, dtype=float)

    def step(x, u):
        return A @ np.asarray(x, dtype=float) + B @ np.asarray(u, dtype=float) + off

    return step


# -- simulation -----------------------------------------------------------------

def sample_in_zonotope(z: Zonotope, rng: np.random.Generator) -> np.ndarray:
    """c + G b with b uniform on the generator cube (not on the set's volume)."""
    if z.num_generators == 0:
        return np.array(z.center)
    return z.center + z.generators @ rng.uniform(-1.0, 1.0, z.num_generators)


@dataclass
class PlantSimulator:
    dynamics: Callable
    dims: PlantDimensions
    Zw: Zonotope
    Zv: Zonotope
    seed: int = 0
    check_eta: bool = True
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.Zw.dim != self.dims.n_x or self.Zv.dim != self.dims.n_y:
            raise DimensionError("noise zonotopes do not match the plant dimensions")
        self.rng = np.random.default_rng(self.seed)

    def clone(self, seed: int) -> "PlantSimulator":
        return PlantSimulator(self.dynamics, self.dims, self.Zw, self.Zv, seed, self.check_eta)

    def _monitor(self, x: np.ndarray, where: str) -> None:
        if self.check_eta and np.max(np.abs(x)) > self.dims.eta:
            raise AssumptionViolation(
                f"state {x.tolist()} at {where} violates |x|_inf <= eta = {self.dims.eta}"
            )

    def step(self, x, u) -> np.ndarray:
        x_next = np.asarray(self.dynamics(x, u), dtype=float) + sample_in_zonotope(self.Zw, self.rng)
        return x_next

    def measure(self, x) -> np.ndarray:
        return self.dims.H @ np.asarray(x, dtype=float) + sample_in_zonotope(self.Zv, self.rng)


def simulate_trajectory(sim: PlantSimulator, x0, inputs: Sequence, record: bool = False,
                        traj_id: str = "0"):
    """Run the plant from x0 under `inputs` (one per output sample).

    Returns the Trajectory, plus the true states when `record` is set.
    The last input has no successor and is stored for bookkeeping only.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[0] < 2:
        raise ValueError("a trajectory needs at least two samples")
    x = np.asarray(x0, dtype=float).reshape(-1)
    xs, ys = [], []
    for k in range(inputs.shape[0]):
        sim._monitor(x, f"trajectory {traj_id}, k={k}")
        xs.append(x)
        ys.append(sim.measure(x))
        if k < inputs.shape[0] - 1:
            x = sim.step(x, inputs[k])
    traj = Trajectory(inputs, np.array(ys), traj_id)
    if record:
        return traj, np.array(xs)
    return traj


def generate_dataset(sim: PlantSimulator, X0: Zonotope, Zu: Zonotope, n_traj: int, length: int,
                     record: bool = False):
    """Random experiments: x0 uniform over X0's cube, inputs uniform over Zu's cube."""
    trajs, states = [], []
    for i in range(n_traj):
        x0 = sample_in_zonotope(X0, sim.rng)
        u = np.array([sample_in_zonotope(Zu, sim.rng) for _ in range(length)])
        out = simulate_trajectory(sim, x0, u, record=record, traj_id=str(i))
        if record:
            trajs.append(out[0])
            states.append(out[1])
        else:
            trajs.append(out)
    return (trajs, states) if record else trajs


# -- containment oracle ---------------------------------------------------------

@dataclass
class ContainmentReport:
    samples: int
    contained: list           # per horizon step, count of contained outputs
    worst_margin: list        # per step, 1 - max |b|_inf over samples (negative = escaped)
    note: str = "inputs, noises and x0 drawn uniformly over generator cubes"

    @property
    def fractions(self) -> list:
        if self.samples == 0:
            return []
        return [c / self.samples for c in self.contained]

    @property
    def all_contained(self) -> bool:
        return all(c == self.samples for c in self.contained)

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "contained": self.contained,
            "fractions": self.fractions,
            "worst_margin": self.worst_margin,
            "note": self.note,
        }


def verify_containment(sim: PlantSimulator, reach, X0: Zonotope, Zu: Zonotope, samples: int,
                       seed: int = 0, tol: float = 1e-9) -> ContainmentReport:
    """Roll the true plant out from X0 and test every y(k) against the k-th output set."""
    N = len(reach.output_sets)
    if samples == 0:
        return ContainmentReport(0, [], [])
    runner = sim.clone(seed)
    contained = [0] * N
    worst = [math.inf] * N
    for _ in range(samples):
        x = sample_in_zonotope(X0, runner.rng)
        runner.measure(x)
        for k in range(N):
            u = sample_in_zonotope(Zu, runner.rng)
            x = runner.step(x, u)
            runner._monitor(x, f"containment rollout, k={k + 1}")
            y = runner.measure(x)
            margin = containment_margin(reach.output_sets[k], y, tol)
            if margin >= -tol:
                contained[k] += 1
            worst[k] = min(worst[k], margin)
    return ContainmentReport(samples, contained, worst)
