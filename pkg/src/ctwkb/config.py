"""Run configuration: parsing, validation, defaults and named presets.

Configs are YAML mappings. A config may name a ``preset`` and override any
of its keys; nested mappings are merged key by key.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .assembly import PruningPolicy
from .engine import StepperConfig, WavepacketSpec
from .errors import CTMError, ConfigError
from .hierarchy import MAX_ORDER
from .potential import PotentialModel
from .potential import from_config as potential_from_config
from .roots import RootSearchConfig


@dataclass(frozen=True)
class TargetGrid:
    """Real final positions: ``count`` points from ``min`` to ``max``, or explicit ``values``."""

    min: float = 0.0
    max: float = 30.0
    count: int = 301
    values: Optional[tuple] = None

    def points(self) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        return np.linspace(self.min, self.max, int(self.count))

    def validate(self):
        pts = self.points()
        if pts.size == 0 or not np.all(np.isfinite(pts)):
            raise ConfigError("target grid must contain finite points")
        if self.values is None and (self.count < 1 or (self.count > 1 and not self.max > self.min)):
            raise ConfigError(f"target grid must be strictly ascending (min={self.min}, max={self.max})")
        if np.any(np.diff(pts) <= 0):
            raise ConfigError("target grid must be strictly ascending")


@dataclass(frozen=True)
class ReferenceConfig:
    """Exact benchmark settings.

    ``method`` is ``auto`` (closed form for potentials of degree <= 2, grid
    propagation otherwise), ``split-operator`` or ``analytic``. ``region``
    bounds the error metric; ``None`` leaves a side open.
    """

    enabled: bool = True
    method: str = "auto"
    x_min: float = -40.0
    x_max: float = 40.0
    n_points: int = 2048
    dt: float = 5e-4
    floor_fraction: float = 0.01
    region: tuple = (None, None)

    def validate(self):
        if self.method not in ("auto", "split-operator", "analytic"):
            raise ConfigError(f"unknown reference method {self.method!r}")
        n = int(self.n_points)
        if n <= 0 or n & (n - 1):
            raise ConfigError("reference n_points must be a power of two")
        if not (self.dt > 0 and self.x_max > self.x_min and self.floor_fraction >= 0):
            raise ConfigError("reference dt, extent and floor must be positive")
        if len(self.region) != 2:
            raise ConfigError("reference region must be [lo, hi]")

    def bounds(self) -> tuple:
        lo, hi = self.region
        return (-np.inf if lo is None else float(lo), np.inf if hi is None else float(hi))


@dataclass(frozen=True)
class EmitConfig:
    profiles: bool = True
    branches: bool = True
    trajectories: bool = False
    imS: bool = True
    plots: bool = True
    reference: bool = True
    # trace every n-th target of each branch when trajectories are emitted
    trajectory_stride: int = 10


@dataclass(frozen=True)
class RunConfig:
    potential: PotentialModel = field(default_factory=lambda: potential_from_config("quartic-double-well"))
    wavepacket: WavepacketSpec = field(default_factory=WavepacketSpec)
    orders: tuple = (1,)
    t_f: tuple = (6.0,)
    targets: TargetGrid = field(default_factory=TargetGrid)
    root_search: RootSearchConfig = field(default_factory=RootSearchConfig)
    pruning: PruningPolicy = field(default_factory=PruningPolicy)
    stepper: StepperConfig = field(default_factory=StepperConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    emit: EmitConfig = field(default_factory=EmitConfig)
    output_dir: str = "ctwkb-out"
    parallelism: int = 1
    name: str = "custom"

    def validate(self) -> "RunConfig":
        if not self.orders or any(int(n) != n or n < 0 or n > MAX_ORDER for n in self.orders):
            raise ConfigError(f"orders must be integers in [0, {MAX_ORDER}], got {list(self.orders)}")
        if not self.t_f or any(not np.isfinite(t) or t < 0 for t in self.t_f):
            raise ConfigError(f"final times must be finite and non-negative, got {list(self.t_f)}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        self.targets.validate()
        self.reference.validate()
        if self.emit.trajectory_stride < 1:
            raise ConfigError("trajectory_stride must be >= 1")
        return self

    def to_dict(self) -> dict:
        """Fully resolved config as plain YAML-friendly data."""
        wp = self.wavepacket.to_dict()
        return {
            "name": self.name,
            "potential": self.potential.to_dict(),
            "wavepacket": wp,
            "orders": list(self.orders),
            "t_f": list(self.t_f),
            "targets": _plain(asdict(self.targets)),
            "root_search": _plain(asdict(self.root_search)),
            "pruning": _plain(asdict(self.pruning)),
            "stepper": _plain(asdict(self.stepper)),
            "reference": _plain(asdict(self.reference)),
            "emit": _plain(asdict(self.emit)),
            "output_dir": self.output_dir,
            "parallelism": self.parallelism,
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, complex):
        return obj.real if obj.imag == 0 else [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _complex(v):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(f"complex values are written [re, im], got {v}")
        return complex(float(v[0]), float(v[1]))
    return v


def _section(cls, data, name, convert=None):
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    for k, fn in (convert or {}).items():
        if k in data and data[k] is not None:
            data[k] = fn(data[k])
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name}: {exc}") from exc


def _tuple(v):
    return tuple(v)


def _seed_tuple(v):
    return tuple(_complex(x) for x in v)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "potential":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


_TOP_KEYS = {"name", "preset", "potential", "wavepacket", "orders", "t_f", "targets", "root_search",
             "pruning", "stepper", "reference", "emit", "output_dir", "parallelism"}


def config_from_dict(data: dict) -> RunConfig:
    """Build and validate a :class:`RunConfig`, expanding ``preset`` first."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    data = dict(data)
    preset = data.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; see `ctwkb list-presets`")
        base = PRESETS[preset]["config"]
        data = _merge(base, data)
        data.setdefault("name", preset)
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        potential = potential_from_config(data.get("potential", "quartic-double-well"))
    except CTMError as exc:
        raise ConfigError(f"invalid potential: {exc}") from exc
    wp = dict(data.get("wavepacket") or {})
    wp.pop("gamma0", None) if wp.get("gamma0") is None else None
    wavepacket = _section(WavepacketSpec, wp, "wavepacket", {"alpha0": _complex, "gamma0": _complex})
    orders = data.get("orders", [1])
    t_f = data.get("t_f", [6.0])
    cfg = RunConfig(
        potential=potential,
        wavepacket=wavepacket,
        orders=tuple(int(n) for n in (orders if isinstance(orders, (list, tuple)) else [orders])),
        t_f=tuple(float(t) for t in (t_f if isinstance(t_f, (list, tuple)) else [t_f])),
        targets=_section(TargetGrid, data.get("targets"), "targets", {"values": _tuple}),
        root_search=_section(RootSearchConfig, data.get("root_search"), "root_search",
                             {"seed_box": _tuple, "seed_shape": _tuple, "secondary_seeds": _seed_tuple}),
        pruning=_section(PruningPolicy, data.get("pruning"), "pruning"),
        stepper=_section(StepperConfig, data.get("stepper"), "stepper"),
        reference=_section(ReferenceConfig, data.get("reference"), "reference", {"region": _tuple}),
        emit=_section(EmitConfig, data.get("emit"), "emit"),
        output_dir=str(data.get("output_dir", "ctwkb-out")),
        parallelism=int(data.get("parallelism", 1)),
        name=str(data.get("name", "custom")),
    )
    return cfg.validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(data or {})


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


_QUARTIC = {"potential": {"preset": "quartic-double-well"},
            "wavepacket": {"alpha0": 1.0, "xc": 0.0, "pc": 5.0, "mass": 1.0, "hbar": 1.0}}

PRESETS = {
    "paper-quartic": {
        "description": "Quartic double well, t_f=6, orders 1 and 2, errors over x <= 22",
        "config": _merge(_QUARTIC, {"orders": [1, 2], "t_f": [6.0], "reference": {"region": [None, 22.0]}}),
    },
    "free-gaussian": {
        "description": "Free spreading Gaussian at rest, N=1, t_f=1, closed-form reference",
        "config": {"potential": {"preset": "free"}, "wavepacket": {"alpha0": 1.0, "xc": 0.0, "pc": 0.0},
                   "orders": [1], "t_f": [1.0], "targets": {"min": -6.0, "max": 6.0, "count": 200}},
    },
    "harmonic-coherent": {
        "description": "Displaced ground-state Gaussian in a unit harmonic well over one period",
        "config": {"potential": {"preset": "harmonic"}, "wavepacket": {"alpha0": 0.5, "xc": 1.0, "pc": 0.0},
                   "orders": [1], "t_f": [float(2 * np.pi)], "targets": {"min": -5.0, "max": 5.0, "count": 200}},
    },
    "fig1": {
        "description": "Branch loci and complex trajectories at t_f = 3 and 6",
        "config": _merge(_QUARTIC, {"orders": [1], "t_f": [3.0, 6.0], "emit": {"trajectories": True}}),
    },
    "fig2": {
        "description": "Exact vs CTM densities at t_f = 0, 1, 5 and 6, 9, 9.9",
        "config": _merge(_QUARTIC, {"orders": [1], "t_f": [0.0, 1.0, 5.0, 6.0, 9.0, 9.9],
                                    "targets": {"min": -10.0, "max": 30.0, "count": 401}}),
    },
    "fig3": {
        "description": "Secondary-branch divergence and pruning at t_f = 6",
        "config": _merge(_QUARTIC, {"orders": [1], "t_f": [6.0], "reference": {"region": [None, 22.0]}}),
    },
    "fig4": {
        "description": "Im(S) of the real and secondary branches over a series of final times",
        "config": _merge(_QUARTIC, {"orders": [1], "t_f": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]}),
    },
    "fig5": {
        "description": "Real-branch trajectories on both sides of the real trajectory at t_f = 5",
        "config": _merge(_QUARTIC, {"orders": [1], "t_f": [5.0], "emit": {"trajectories": True}}),
    },
    "fig6": {
        "description": "N=1 vs N=2 relative errors at t_f = 6 over x <= 22",
        "config": _merge(_QUARTIC, {"orders": [1, 2], "t_f": [6.0], "reference": {"region": [None, 22.0]}}),
    },
}


def list_presets() -> dict:
    """Preset name -> one-line description."""
    return {name: p["description"] for name, p in PRESETS.items()}


def preset_config(name: str, **overrides) -> RunConfig:
    data = {"preset": name}
    data.update(overrides)
    return config_from_dict(data)


def with_output(cfg: RunConfig, output_dir) -> RunConfig:
    return replace(cfg, output_dir=str(output_dir))


KEY_DOCS = {
    "name": "label recorded in the report",
    "potential": "a preset name (`free`, `harmonic`, `quartic-double-well`), a mapping `{preset, ...}` passing "
                 "preset parameters (`omega`, `mass`; `scale`, `well`), or `{label, coefficients}` with "
                 "polynomial coefficients c_0..c_d, complex ones as [re, im]",
    "wavepacket.alpha0": "initial width parameter, Re > 0",
    "wavepacket.xc": "initial centre",
    "wavepacket.pc": "initial mean momentum",
    "wavepacket.mass": "particle mass",
    "wavepacket.hbar": "reduced Planck constant",
    "orders": "WKB orders N to assemble, each in 0..4",
    "t_f": "final times; one job per value",
    "targets.min": "first real target x",
    "targets.max": "last real target x",
    "targets.count": "number of evenly spaced targets",
    "targets.values": "explicit strictly ascending targets, overriding min/max/count",
    "root_search.seed_box": "[re_min, re_max, im_min, im_max] of the Newton seed grid for discovery",
    "root_search.seed_shape": "[n_re, n_im] seeds in that box",
    "root_search.tol": "accept a root when |x(t_f; x0) - X| is below this",
    "root_search.max_iter": "Newton iterations per seed",
    "root_search.cluster_tol": "roots closer than this are merged",
    "root_search.caustic_tol": "|dx/dx0| below this counts as a caustic and stops Newton",
    "root_search.loose_rtol": "integrator rtol while the residual is still large",
    "root_search.stage_switch": "residual below which the full-accuracy integrator takes over",
    "root_search.rediscover_every": "rerun discovery every this many targets during a sweep",
    "root_search.jump_factor": "a continued root moving more than this multiple of the target step is rejected",
    "root_search.escape_factor": "Newton iterates beyond this multiple of the seed box radius are abandoned",
    "root_search.family": "`short-time` follows the three-member branch family; `grid` keeps every grid root",
    "root_search.short_time": "time at which the branch family is seeded before continuation to t_f",
    "root_search.secondary_seeds": "x0 * t seeds of the secondary branches; null derives them from the potential",
    "root_search.time_step_tol": "relative corrector move accepted per step of time continuation",
    "pruning.negligible_rel": "drop a secondary below this fraction of the largest real-branch amplitude",
    "pruning.divergence_factor": "cut a growing secondary once it exceeds this multiple of the largest "
                                 "real-branch amplitude",
    "pruning.enabled": "switch pruning off to keep every branch",
    "stepper.method": "`dopri5` (adaptive) or `rk4` (fixed step, reproducible to the byte)",
    "stepper.rtol": "adaptive relative tolerance",
    "stepper.atol": "adaptive absolute tolerance",
    "stepper.dt": "rk4 step size",
    "stepper.max_steps": "step budget per trajectory before it is reported as failed",
    "stepper.guard": "|state| above this marks a trajectory as diverged",
    "stepper.path_samples": "points stored per emitted trajectory path",
    "reference.enabled": "compute the exact reference",
    "reference.method": "`auto` (closed form for quadratic potentials), `split-operator` or `analytic`",
    "reference.x_min": "left edge of the split-operator grid",
    "reference.x_max": "right edge of the split-operator grid",
    "reference.n_points": "grid points, a power of two",
    "reference.dt": "split-operator time step",
    "reference.floor_fraction": "targets with |psi_exact| below this fraction of its maximum are left out of "
                                "the error metric",
    "reference.region": "[lo, hi] target interval for the error metric; null means unbounded",
    "emit.profiles": "write profile_N*.csv",
    "emit.branches": "write branches.csv",
    "emit.trajectories": "write trajectories.csv (also set by `run --trace`)",
    "emit.imS": "write imS.csv",
    "emit.plots": "write SVG plots",
    "emit.reference": "write reference.csv",
    "emit.trajectory_stride": "write the trajectories of every this-many-th target of each branch",
    "output_dir": "output directory (overridden by `run -o`)",
    "parallelism": "worker processes, one final time per worker (overridden by `run -j`)",
}


def config_reference() -> str:
    """Markdown page listing every config key with its default."""
    d = RunConfig().to_dict()
    lines = ["# Configuration reference", "",
             "Every key below is optional; the value shown is the default. A config file may start from",
             "`preset: <name>` and override any subset of keys.", "", "## top level", ""]
    sections = []
    for key, val in d.items():
        if isinstance(val, dict) and key != "potential":
            sections.append((key, val))
        else:
            lines.append(f"- `{key}` = `{val}`: {KEY_DOCS.get(key, '')}")
    for key, val in sections:
        lines += ["", f"## {key}", ""]
        lines += [f"- `{key}.{k}` = `{v}`: {KEY_DOCS.get(f'{key}.{k}', '')}" for k, v in val.items()]
    lines += ["", "## presets", ""]
    lines += [f"- `{n}`: {desc}" for n, desc in list_presets().items()]
    return "\n".join(lines) + "\n"
