"""Experiment configuration: dataclasses with a YAML round-trip.

Zonotopes are written as {center: [...], generators: [[col1], [col2], ...]},
the same layout as the JSON set dumps. Defaults reproduce the CSTR
benchmark: one block for the open-loop reachability run and one for the
closed-loop controller, each with its own initial set, noise and data.
"""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .sets import Zonotope


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads 2e-4 (no dot) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                |[-+]?\.(?:inf|Inf|INF)
                |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


def _zono(center, gens) -> dict:
    return {"center": list(center), "generators": [list(g) for g in gens]}


def _diag(c, d) -> dict:
    cols = []
    for i, v in enumerate(d):
        col = [0.0] * len(d)
        col[i] = v
        cols.append(col)
    return _zono(c, cols)


@dataclass
class PlantSpec:
    """`cstr` is the smooth deviation-coordinate reactor, `cstr_printed` the
    literal benchmark formulas (optionally with a saturated exponent),
    `linear` is x+ = A x + B u."""

    name: str = "cstr"
    exp_arg_max: Optional[float] = None
    A: Optional[list] = None
    B: Optional[list] = None


@dataclass
class DataSpec:
    trajectories: int = 50
    length: int = 10


@dataclass
class ReachSpec:
    X0: dict = field(default_factory=lambda: _diag([-2.0, -20.5], [0.01, 0.2]))
    Zw: dict = field(default_factory=lambda: _zono([0.0, 0.0], [[2e-4, 2e-4]]))
    Zv: dict = field(default_factory=lambda: _zono([0.0, 0.0], [[1e-3, 1e-3]]))
    Zu: dict = field(default_factory=lambda: _diag([0.0, 0.0], [0.1, 3.0]))
    data: DataSpec = field(default_factory=DataSpec)
    N: int = 5
    # from the naive estimator on the default data (estimate-lipschitz), rounded up
    Lf: list = field(default_factory=lambda: [0.6, 0.9])
    delta: float = 1.45
    z_eps_override: Optional[dict] = None
    max_generators: Optional[int] = None
    samples: int = 1000


@dataclass
class NzpcSpec:
    X0: dict = field(default_factory=lambda: _diag([-2.0, -20.5], [0.01, 1.0]))
    Zw: dict = field(default_factory=lambda: _zono([0.0, 0.0], [[2e-4, 0.02]]))
    Zv: dict = field(default_factory=lambda: _zono([0.0, 0.0], [[1e-3, 0.01]]))
    data: DataSpec = field(default_factory=DataSpec)
    N: int = 3
    Q: list = field(default_factory=lambda: [[5.0, 0.0], [0.0, 5.0]])
    R: list = field(default_factory=lambda: [[0.02, 0.0], [0.0, 0.02]])
    y_ref: list = field(default_factory=lambda: [0.0, 0.0])
    u_ref: list = field(default_factory=lambda: [0.0, 0.007])
    U: dict = field(default_factory=lambda: _diag([0.0, 0.007], [5.0, 3.0]))
    Zu: Optional[dict] = None          # input domain; None means U
    Y_lower: list = field(default_factory=lambda: [-3.0, -22.0])
    Y_upper: list = field(default_factory=lambda: [0.25, 2.7])
    # unused while z_eps_override is set
    Lf: list = field(default_factory=lambda: [1.0, 1.0])
    delta: float = 0.0
    z_eps_override: Optional[dict] = field(default_factory=lambda: _diag([0.0, 0.0], [0.08, 0.71]))
    max_generators: Optional[int] = None
    steps: int = 150
    seeds: int = 10
    fallback_hold: bool = False


@dataclass
class ExperimentConfig:
    plant: PlantSpec = field(default_factory=PlantSpec)
    H: list = field(default_factory=lambda: [[1.0, 0.001], [-0.01, 1.0]])
    eta: float = 22.0
    seed: int = 0
    out: str = "results"
    reach: ReachSpec = field(default_factory=ReachSpec)
    nzpc: NzpcSpec = field(default_factory=NzpcSpec)

    @property
    def n_y(self) -> int:
        return len(self.H)

    @property
    def n_x(self) -> int:
        return len(self.H[0])

    @property
    def n_u(self) -> int:
        return len(self.reach.Zu["center"])

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "ExperimentConfig":
        cfg = _build(cls, d or {}, "")
        cfg.validate()
        return cfg

    def validate(self) -> None:
        n_x, n_y, n_u = self.n_x, self.n_y, self.n_u
        if any(len(row) != n_x for row in self.H):
            raise ConfigError("H: rows have different lengths")
        if n_y > n_x:
            raise ConfigError("H: more outputs than states")
        if self.eta <= 0:
            raise ConfigError("eta: must be positive")
        if self.plant.name not in ("cstr", "cstr_printed", "linear"):
            raise ConfigError(f"plant.name: unknown plant {self.plant.name!r}")
        if self.plant.name.startswith("cstr") and (n_x, n_u) != (2, 2):
            raise ConfigError("plant: the CSTR has two states and two inputs")
        if self.plant.name == "linear":
            A = np.asarray(self.plant.A, dtype=float) if self.plant.A is not None else None
            B = np.asarray(self.plant.B, dtype=float) if self.plant.B is not None else None
            if A is None or A.shape != (n_x, n_x):
                raise ConfigError(f"plant.A: expected a {n_x}x{n_x} matrix")
            if B is None or B.shape != (n_x, n_u):
                raise ConfigError(f"plant.B: expected a {n_x}x{n_u} matrix")

        for block, spec in (("reach", self.reach), ("nzpc", self.nzpc)):
            dims = {"X0": n_x, "Zw": n_x, "Zv": n_y}
            dims["Zu" if block == "reach" else "U"] = n_u
            if block == "nzpc" and spec.Zu is not None:
                dims["Zu"] = n_u
            for name, n in dims.items():
                _zonotope(getattr(spec, name), f"{block}.{name}", n)
            if spec.z_eps_override is not None:
                _zonotope(spec.z_eps_override, f"{block}.z_eps_override", n_y)
            if len(spec.Lf) != n_x or any(v <= 0 for v in spec.Lf):
                raise ConfigError(f"{block}.Lf: need {n_x} positive entries")
            if spec.delta < 0:
                raise ConfigError(f"{block}.delta: must be non-negative")
            if spec.N < 1:
                raise ConfigError(f"{block}.N: horizon must be at least 1")
            if spec.data.trajectories < 1 or spec.data.length < 2:
                raise ConfigError(f"{block}.data: need >= 1 trajectory of length >= 2")
            if spec.max_generators is not None and spec.max_generators < n_y:
                raise ConfigError(f"{block}.max_generators: must be at least n_y")
        if self.reach.samples < 0:
            raise ConfigError("reach.samples: must be non-negative")

        s = self.nzpc
        for name, shape in (("Q", (n_y, n_y)), ("R", (n_u, n_u))):
            M = np.asarray(getattr(s, name), dtype=float)
            if M.shape != shape:
                raise ConfigError(f"nzpc.{name}: expected shape {shape}")
            if not np.allclose(M, M.T) or np.linalg.eigvalsh(M)[0] <= 0:
                raise ConfigError(f"nzpc.{name}: must be symmetric positive definite")
        for name, n in (("y_ref", n_y), ("u_ref", n_u), ("Y_lower", n_y), ("Y_upper", n_y)):
            if len(getattr(s, name)) != n:
                raise ConfigError(f"nzpc.{name}: expected {n} entries")
        if any(lo > hi for lo, hi in zip(s.Y_lower, s.Y_upper)):
            raise ConfigError("nzpc.Y_lower: exceeds Y_upper")
        if s.steps < 0 or s.seeds < 1:
            raise ConfigError("nzpc.steps must be >= 0 and nzpc.seeds >= 1")
        U = Zonotope.from_dict(s.U).interval()
        dom = Zonotope.from_dict(s.Zu if s.Zu is not None else s.U).interval()
        if np.any(U.lower < dom.lower - 1e-12) or np.any(U.upper > dom.upper + 1e-12):
            raise ConfigError("nzpc.U: must lie inside the input domain nzpc.Zu")


def _zonotope(d, where: str, n: int) -> None:
    if not isinstance(d, dict) or "center" not in d:
        raise ConfigError(f"{where}: expected {{center: [...], generators: [[...], ...]}}")
    if len(d["center"]) != n:
        raise ConfigError(f"{where}: center has {len(d['center'])} entries, expected {n}")
    for col in d.get("generators") or []:
        if len(col) != n:
            raise ConfigError(f"{where}: generator column of length {len(col)}, expected {n}")


def _build(cls, d, prefix: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(fields)
    if unknown:
        raise ConfigError(f"{prefix or 'config'}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for name, val in d.items():
        f = fields[name]
        sub = {"plant": PlantSpec, "reach": ReachSpec, "nzpc": NzpcSpec, "data": DataSpec}.get(name)
        if sub is not None and isinstance(f.default_factory, type):
            kwargs[name] = _build(sub, val or {}, f"{prefix}{name}.")
        else:
            kwargs[name] = val
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from exc


def load_config(path=None) -> ExperimentConfig:
    """Read a YAML config; missing fields take the benchmark defaults."""
    if path is None:
        return ExperimentConfig()
    with open(path) as fh:
        try:
            data = yaml.load(fh, Loader=_Loader)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig, path=None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)
    if path is not None:
        Path(path).write_text(text)
    return text
