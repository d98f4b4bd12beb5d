"""Run configuration: TOML schema, defaults and the compatibility matrix.

Schema (every key optional except ``scenario``)::

    scenario = "free_gaussian"      # see SCENARIOS
    solver = "schrodinger_split"    # schrodinger_split | schrodinger_cn | madelung | omega

    [grid]
    dim = 1
    points = 512                    # per axis
    length = 20.0                   # per axis
    boundary = "periodic"           # periodic | box

    [time]
    dt = 1e-4
    t_end = 0.5
    record_stride = 500             # snapshot cadence in steps

    [params]
    hbar = 1.0
    mass = 1.0
    n_monads = 1.0
    omega = 1.0                     # harmonic scenarios
    sigma0 = 1.0                    # Gaussian position spread / vortex core scale
    k = 0.0                         # mean wavenumber along x
    x0 = 1.0                        # coherent-state displacement
    j = 1                           # vortex winding
    level = 1                       # box quantum number

    [kinetics]                      # optional block
    count = 100000
    seed = 1
    tau = 0.05
    bins = 32
    steps = 20
    dt = 0.01

    [compare]
    reference = "schrodinger_split"

    [output]
    dir = "out"
    csv = true
    fields = false
"""
from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, replace
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .scenarios import SCENARIOS

SOLVERS = ("schrodinger_split", "schrodinger_cn", "madelung", "omega")
WAVE_SOLVERS = ("schrodinger_split", "schrodinger_cn")

# grid and time defaults per scenario; lengths keep the log-density at the
# domain edge shallow enough for the explicit fluid solvers
_SCENARIO_DEFAULTS = {
    "free_gaussian": dict(dim=1, points=512, length=20.0, boundary="periodic", dt=1e-4, t_end=0.5, record_stride=500),
    "harmonic_ground": dict(dim=1, points=512, length=12.0, boundary="periodic", dt=1e-4, t_end=2 * math.pi, record_stride=4000),
    "harmonic_coherent": dict(dim=1, points=512, length=14.0, boundary="periodic", dt=1e-4, t_end=2 * math.pi, record_stride=4000),
    "box_eigenstate": dict(dim=1, points=512, length=1.0, boundary="box", dt=1e-5, t_end=0.01, record_stride=100),
    "plane_wave": dict(dim=1, points=512, length=4 * math.pi, boundary="periodic", dt=1e-4, t_end=0.1, record_stride=100),
    "vortex_2d": dict(dim=2, points=256, length=16.0, boundary="periodic", dt=1e-3, t_end=0.2, record_stride=50),
}
_SCENARIO_SOLVER = {
    "box_eigenstate": "schrodinger_cn",
}
_SCENARIO_PARAMS = {
    "free_gaussian": dict(sigma0=1.0, k=0.0),
    "plane_wave": dict(k=2.0),
    "vortex_2d": dict(sigma0=1.5, j=1),
}

_SCHEMA = {
    None: {"scenario": str, "solver": str},
    "grid": {"dim": int, "points": int, "length": float, "boundary": str},
    "time": {"dt": float, "t_end": float, "record_stride": int},
    "params": {
        "hbar": float,
        "mass": float,
        "n_monads": float,
        "omega": float,
        "sigma0": float,
        "k": float,
        "x0": float,
        "j": int,
        "level": int,
    },
    "kinetics": {"count": int, "seed": int, "tau": float, "bins": int, "steps": int, "dt": float},
    "compare": {"reference": str},
    "output": {"dir": str, "csv": bool, "fields": bool},
}


@dataclass(frozen=True)
class KineticsConfig:
    count: int = 100_000
    seed: int = 1
    tau: float = 0.05
    bins: int = 32
    steps: int = 20
    dt: float = 0.01


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    solver: str = "schrodinger_split"
    dim: int = 1
    points: int = 512
    length: float = 20.0
    boundary: str = "periodic"
    dt: float = 1e-4
    t_end: float = 0.5
    record_stride: int = 500
    hbar: float = 1.0
    mass: float = 1.0
    n_monads: float = 1.0
    omega: float = 1.0
    sigma0: float = 1.0
    k: float = 0.0
    x0: float = 1.0
    j: int = 1
    level: int = 1
    kinetics: Optional[KineticsConfig] = None
    reference: str = "schrodinger_split"
    out_dir: str = "out"
    csv: bool = True
    fields: bool = False

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.kinetics is None:
            out["kinetics"] = None
        return out

    def scenario_options(self) -> dict:
        return {"sigma0": self.sigma0, "k": self.k, "x0": self.x0, "j": self.j, "level": self.level}


def _check_type(section, key, value, kind):
    name = key if section is None else f"{section}.{key}"
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{name} must be a boolean, got {value!r}", key=name)
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{name} must be an integer, got {value!r}", key=name)
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{name} must be a number, got {value!r}", key=name)
        return float(value)
    if not isinstance(value, str):
        raise ConfigurationError(f"{name} must be a string, got {value!r}", key=name)
    return value


def _flatten(doc: dict) -> tuple:
    flat = {}
    kin = None
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in _SCHEMA or key is None:
                raise ConfigurationError(f"unknown section [{key}]", key=key)
            allowed = _SCHEMA[key]
            for sub, v in value.items():
                if sub not in allowed:
                    raise ConfigurationError(f"unknown key {key}.{sub}", key=f"{key}.{sub}")
                v = _check_type(key, sub, v, allowed[sub])
                if key == "kinetics":
                    kin = {} if kin is None else kin
                    kin[sub] = v
                elif key == "output":
                    flat["out_dir" if sub == "dir" else sub] = v
                else:
                    flat[sub] = v
            if key == "kinetics" and kin is None:
                kin = {}
        else:
            if key not in _SCHEMA[None]:
                raise ConfigurationError(f"unknown key {key}", key=key)
            flat[key] = _check_type(None, key, value, _SCHEMA[None][key])
    return flat, kin


def build_config(values: dict, kinetics: Optional[dict] = None) -> ScenarioConfig:
    """Apply scenario defaults under ``values`` and validate the result."""
    if "scenario" not in values:
        raise ConfigurationError("missing required key scenario", key="scenario")
    name = values["scenario"]
    if name not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}", key="scenario")
    merged = dict(_SCENARIO_DEFAULTS[name])
    merged.update(_SCENARIO_PARAMS.get(name, {}))
    if name in _SCENARIO_SOLVER:
        merged["solver"] = _SCENARIO_SOLVER[name]
    merged.update(values)
    kin = None if kinetics is None else KineticsConfig(**kinetics)
    cfg = ScenarioConfig(kinetics=kin, **merged)
    validate(cfg)
    return cfg


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate TOML text; unknown keys and bad combinations name the key."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed config: {exc}") from exc
    flat, kin = _flatten(doc)
    return build_config(flat, kin)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def override(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    """Replace fields (ignoring ``None``) and revalidate."""
    changes = {k: v for k, v in changes.items() if v is not None}
    if not changes:
        return cfg
    if "scenario" in changes and changes["scenario"] != cfg.scenario:
        base = {k: v for k, v in changes.items() if k != "kinetics"}
        kin = changes.get("kinetics", cfg.kinetics)
        return build_config(base, None if kin is None else asdict(kin))
    out = replace(cfg, **changes)
    validate(out)
    return out


def validate(cfg: ScenarioConfig) -> None:
    """Value ranges and the scenario / solver / boundary compatibility matrix."""
    if cfg.solver not in SOLVERS:
        raise ConfigurationError(f"unknown solver {cfg.solver!r}; choose from {', '.join(SOLVERS)}", key="solver")
    if cfg.reference not in SOLVERS:
        raise ConfigurationError(f"unknown reference solver {cfg.reference!r}", key="compare.reference")
    if cfg.dim not in (1, 2):
        raise ConfigurationError("grid.dim must be 1 or 2", key="grid.dim")
    if cfg.points < 8:
        raise ConfigurationError("grid.points must be >= 8", key="grid.points")
    if cfg.boundary not in ("periodic", "box"):
        raise ConfigurationError("grid.boundary must be periodic or box", key="grid.boundary")
    for key in ("length", "dt", "hbar", "mass", "omega", "sigma0"):
        if not getattr(cfg, key) > 0:
            raise ConfigurationError(f"{key} must be positive", key=key)
    if not cfg.t_end >= 0:
        raise ConfigurationError("t_end must be non-negative", key="time.t_end")
    if cfg.record_stride < 1:
        raise ConfigurationError("record_stride must be >= 1", key="time.record_stride")
    if not cfg.n_monads >= 1:
        raise ConfigurationError("n_monads must be >= 1", key="params.n_monads")
    if cfg.level < 1:
        raise ConfigurationError("level must be >= 1", key="params.level")
    if cfg.kinetics is not None:
        kc = cfg.kinetics
        if kc.count < 1000:
            raise ConfigurationError("kinetics.count must be >= 1000", key="kinetics.count")
        if kc.bins < 16:
            raise ConfigurationError("kinetics.bins must be >= 16", key="kinetics.bins")
        if not (kc.tau > 0 and kc.dt > 0) or kc.steps < 0:
            raise ConfigurationError("kinetics.tau and kinetics.dt must be positive, steps >= 0", key="kinetics")
    # compatibility matrix
    if cfg.scenario == "vortex_2d" and cfg.dim != 2:
        raise ConfigurationError("vortex_2d requires grid.dim = 2", key="grid.dim")
    if cfg.scenario == "box_eigenstate":
        if cfg.solver != "schrodinger_cn":
            raise ConfigurationError("box_eigenstate requires solver schrodinger_cn", key="solver")
        if cfg.boundary != "box":
            raise ConfigurationError("box_eigenstate requires a box boundary", key="grid.boundary")
    elif cfg.boundary == "box":
        raise ConfigurationError(f"{cfg.scenario} is defined on a periodic grid", key="grid.boundary")
    if cfg.solver == "schrodinger_split" and cfg.boundary != "periodic":
        raise ConfigurationError("schrodinger_split needs a periodic grid; use schrodinger_cn", key="solver")
    if cfg.solver in ("madelung", "omega"):
        if cfg.scenario == "vortex_2d":
            raise ConfigurationError("the fluid solvers are singular at a vortex core; use a wavefunction solver", key="solver")
        if cfg.boundary != "periodic":
            raise ConfigurationError("the fluid solvers need nonvanishing density at the edges", key="solver")
        limit = 0.2 * (cfg.length / cfg.points) ** 2 * cfg.mass / cfg.hbar
        if cfg.dt > limit:
            raise ConfigurationError(f"dt = {cfg.dt:g} exceeds the explicit stability limit {limit:.3e}", key="time.dt")
