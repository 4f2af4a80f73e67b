"""Simulation configuration: JSON tree <-> SimConfig, and object construction.

Matrices are nested arrays of ``[re, im]`` pairs, a preset name
(``"pauli_x"``, ``"pauli_z"``, ``"number"``, ``"jaynes_cummings_detuning"``,
``"zero"``, ``"identity"``) or ``{"preset": name, "scale": s}``.
"""

from __future__ import annotations

import copy
import json
import logging
import re
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .engine import IDENTITY, GeneratorSchedule, TargetEvolution, as_hermitian, preset, schedule_from_target
from .errors import ConfigError, NotHermitian
from .joint import JointState, StepConfig
from .spectral import ClockPulse, DispersionRelation, SpatialGrid, make_gaussian_pulse

log = logging.getLogger(__name__)

_MISSING = object()

AXIS_ALIASES = {
    "W": "windows.W",
    "omega": "pulse.omega",
    "M": "dispersion.M",
    "dt": "stepping.dt",
    "pattern": "windows.pattern",
    "mode": "run.mode",
}
MAX_SWEEP_POINTS = 10_000
OMEGA_W_WARN = 4.0


@dataclass
class GridConfig:
    n_points: int
    length: float
    origin: float | None = None


@dataclass
class PulseConfig:
    x0: float
    omega: float
    k0: float = 0.0
    chirp: float = 0.0


@dataclass
class DispersionConfig:
    kind: str
    v_g: float = 1.0
    M: float | None = None
    table: list | None = None
    table_path: str | None = None


@dataclass
class EngineConfig:
    dim: int = 2
    H_E: Any = "zero"
    initial: Any = 0
    schedule: dict = field(default_factory=lambda: {"generators": []})


@dataclass
class WindowsConfig:
    W: float
    pattern: str = "explicit"
    origin: float = 0.0
    align_tol: float = 0.5


@dataclass
class SteppingConfig:
    dt: float
    splitting: str = "strang"
    steps_per_record: int = 1
    max_ratio: float = 100.0


@dataclass
class RunConfig:
    duration: float
    out: str = "out"
    seed: int = 0
    mode: str = "intensity"
    dump_state: bool = True
    sentinel: float | None = 1e-8
    fidelity: bool = False


@dataclass
class SweepConfig:
    axes: dict
    jobs: int = 1
    oracle: bool = False
    degradation_dispersion: DispersionConfig | None = None


@dataclass
class SimConfig:
    grid: GridConfig
    pulse: PulseConfig
    dispersion: DispersionConfig
    windows: WindowsConfig
    stepping: SteppingConfig
    run: RunConfig
    engine: EngineConfig = field(default_factory=EngineConfig)
    c: float = 1.0
    sweep: SweepConfig | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["sweep"] is None:
            del d["sweep"]
        return _drop_none(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _drop_none(obj):
    if isinstance(obj, dict):
        return {k: _drop_none(v) for k, v in obj.items() if v is not None}
    return obj


# ---------------------------------------------------------------- parsing

def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _number(v, path, *, positive=False, integer=False, allow_none=False):
    if v is None and allow_none:
        return None
    if integer:
        if not isinstance(v, int) or isinstance(v, bool):
            raise ConfigError(f"{path}: expected an integer, got {v!r}", path)
    elif not _is_num(v):
        raise ConfigError(f"{path}: expected a number, got {v!r}", path)
    if not np.isfinite(v):
        raise ConfigError(f"{path}: must be finite", path)
    if positive and not v > 0:
        raise ConfigError(f"{path}: must be positive, got {v!r}", path)
    return v if integer else float(v)


def _choice(v, path, options):
    if v not in options:
        raise ConfigError(f"{path}: expected one of {', '.join(options)}, got {v!r}", path)
    return v


def _section(tree, key, cls, path, parsers):
    """Build dataclass ``cls`` from ``tree[key]`` using per-field ``parsers``."""
    raw = tree.get(key, _MISSING) if isinstance(tree, dict) else _MISSING
    p = f"{path}.{key}" if path else key
    if raw is _MISSING:
        raise ConfigError(f"{p}: missing section", p)
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: expected an object", p)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{p}.{unknown[0]}: unknown field", f"{p}.{unknown[0]}")
    kw = {}
    for f in fields(cls):
        fp = f"{p}.{f.name}"
        if f.name in raw:
            kw[f.name] = parsers.get(f.name, lambda v, _p: v)(raw[f.name], fp)
        elif f.default is MISSING and f.default_factory is MISSING:
            raise ConfigError(f"{fp}: required field missing", fp)
    return cls(**kw)


def _matrix_spec(v, path, dim):
    """Validate a generator spec; returns it unchanged (canonical JSON form)."""
    to_matrix(v, dim, path)
    return v


def to_matrix(spec, dim: int, path: str = "matrix"):
    """Convert a generator spec to a Hermitian array (or IDENTITY)."""
    if isinstance(spec, str):
        if spec == "identity":
            return IDENTITY
        try:
            return preset(spec, dim)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}", path) from None
    if isinstance(spec, dict):
        extra = set(spec) - {"preset", "scale"}
        if extra or "preset" not in spec:
            raise ConfigError(f"{path}: expected {{'preset': name, 'scale': s}}", path)
        m = to_matrix(spec["preset"], dim, path + ".preset")
        if m is IDENTITY:
            raise ConfigError(f"{path}: identity cannot be scaled", path)
        return m * _number(spec.get("scale", 1.0), path + ".scale")
    if isinstance(spec, list):
        try:
            arr = np.array(spec, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: matrix entries must be [re, im] number pairs", path) from None
        if arr.shape != (dim, dim, 2):
            raise ConfigError(f"{path}: expected a {dim}x{dim} matrix of [re, im] pairs, got shape {arr.shape}", path)
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"{path}: matrix entries must be finite", path)
        try:
            return as_hermitian(arr[..., 0] + 1j * arr[..., 1])
        except NotHermitian as exc:
            raise ConfigError(f"{path}: {exc}", path) from None
    raise ConfigError(f"{path}: expected a matrix, preset name or preset object", path)


def matrix_to_json(m) -> list:
    m = np.asarray(m)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _table(v, path):
    if v is None:
        return None
    try:
        arr = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected [[k, omega], ...]", path) from None
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 4:
        raise ConfigError(f"{path}: expected at least 4 [k, omega] rows", path)
    return [[float(a), float(b)] for a, b in arr]


def _dispersion(tree, key, path):
    d = _section(tree, key, DispersionConfig, path, {
        "kind": lambda v, p: _choice(v, p, ("linear", "massive", "tabulated")),
        "v_g": lambda v, p: _number(v, p),
        "M": lambda v, p: _number(v, p, positive=True, allow_none=True),
        "table": _table,
        "table_path": lambda v, p: v if v is None or isinstance(v, str) else _bad(p, "expected a path string"),
    })
    p = f"{path}.{key}" if path else key
    if d.kind == "massive" and d.M is None:
        raise ConfigError(f"{p}.M: required for massive dispersion", f"{p}.M")
    if d.kind == "tabulated" and d.table is None and d.table_path is None:
        raise ConfigError(f"{p}.table: tabulated dispersion needs table or table_path", f"{p}.table")
    return d


def _bad(path, msg):
    raise ConfigError(f"{path}: {msg}", path)


def _schedule_spec(v, path, dim):
    if not isinstance(v, dict) or len(v) != 1 or next(iter(v)) not in ("generators", "target"):
        raise ConfigError(f"{path}: expected {{'generators': [...]}} or {{'target': {{...}}}}", path)
    if "generators" in v:
        gens = v["generators"]
        if not isinstance(gens, list):
            raise ConfigError(f"{path}.generators: expected a list", f"{path}.generators")
        for i, g in enumerate(gens):
            to_matrix(g, dim, f"{path}.generators[{i}]")
        return v
    t = v["target"]
    tp = f"{path}.target"
    if not isinstance(t, dict):
        raise ConfigError(f"{tp}: expected an object", tp)
    kind = _choice(t.get("kind"), f"{tp}.kind", ("constant", "piecewise"))
    allowed = {"kind", "duration", "n_windows", "sample_times"} | ({"generator"} if kind == "constant" else {"breakpoints", "generators"})
    unknown = sorted(set(t) - allowed)
    if unknown:
        raise ConfigError(f"{tp}.{unknown[0]}: unknown field", f"{tp}.{unknown[0]}")
    _number(t.get("duration"), f"{tp}.duration", positive=True)
    if "n_windows" in t:
        _number(t["n_windows"], f"{tp}.n_windows", integer=True, positive=True)
    if "sample_times" in t:
        st = t["sample_times"]
        if not isinstance(st, dict) or not all(re.fullmatch(r"\d+", str(k)) for k in st):
            raise ConfigError(f"{tp}.sample_times: expected an object of window index -> time", f"{tp}.sample_times")
        for k, s in st.items():
            _number(s, f"{tp}.sample_times.{k}")
    if kind == "constant":
        to_matrix(t.get("generator"), dim, f"{tp}.generator")
    else:
        bps = t.get("breakpoints")
        gens = t.get("generators")
        if not isinstance(bps, list) or not isinstance(gens, list) or len(gens) != len(bps) + 1:
            raise ConfigError(f"{tp}.generators: need one more generator than breakpoints", f"{tp}.generators")
        for i, b in enumerate(bps):
            _number(b, f"{tp}.breakpoints[{i}]")
        for i, g in enumerate(gens):
            if to_matrix(g, dim, f"{tp}.generators[{i}]") is IDENTITY:
                raise ConfigError(f"{tp}.generators[{i}]: target generators must be matrices", f"{tp}.generators[{i}]")
    return v


def _initial(v, path, dim):
    if isinstance(v, int) and not isinstance(v, bool):
        if not 0 <= v < dim:
            raise ConfigError(f"{path}: basis index out of range", path)
        return v
    try:
        arr = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a basis index or a list of [re, im] pairs", path) from None
    if arr.shape != (dim, 2) or not np.all(np.isfinite(arr)) or not np.any(arr):
        raise ConfigError(f"{path}: expected {dim} finite [re, im] pairs, not all zero", path)
    return v


def from_dict(tree: dict) -> SimConfig:
    if not isinstance(tree, dict):
        raise ConfigError("config root must be an object", "")
    known = {f.name for f in fields(SimConfig)}
    unknown = sorted(set(tree) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown section", unknown[0])
    grid = _section(tree, "grid", GridConfig, "", {
        "n_points": lambda v, p: _power_of_two(v, p),
        "length": lambda v, p: _number(v, p, positive=True),
        "origin": lambda v, p: _number(v, p, allow_none=True),
    })
    pulse = _section(tree, "pulse", PulseConfig, "", {
        "x0": lambda v, p: _number(v, p), "omega": lambda v, p: _number(v, p, positive=True),
        "k0": lambda v, p: _number(v, p), "chirp": lambda v, p: _number(v, p),
    })
    disp = _dispersion(tree, "dispersion", "")
    windows = _section(tree, "windows", WindowsConfig, "", {
        "W": lambda v, p: _number(v, p, positive=True),
        "pattern": lambda v, p: _choice(v, p, ("explicit", "alternating")),
        "origin": lambda v, p: _number(v, p),
        "align_tol": lambda v, p: _number(v, p, positive=True),
    })
    stepping = _section(tree, "stepping", SteppingConfig, "", {
        "dt": lambda v, p: _number(v, p, positive=True),
        "splitting": lambda v, p: _choice(v, p, ("strang", "lie")),
        "steps_per_record": lambda v, p: _number(v, p, integer=True, positive=True),
        "max_ratio": lambda v, p: _number(v, p, positive=True),
    })
    run = _section(tree, "run", RunConfig, "", {
        "duration": _nonnegative,
        "out": lambda v, p: v if isinstance(v, str) else _bad(p, "expected a string"),
        "seed": lambda v, p: _number(v, p, integer=True),
        "mode": lambda v, p: _choice(v, p, ("intensity", "paper_sqrt")),
        "dump_state": lambda v, p: v if isinstance(v, bool) else _bad(p, "expected true/false"),
        "sentinel": lambda v, p: _number(v, p, positive=True, allow_none=True),
        "fidelity": lambda v, p: v if isinstance(v, bool) else _bad(p, "expected true/false"),
    })
    if "engine" in tree:
        raw = tree["engine"]
        dim = raw.get("dim", 2) if isinstance(raw, dict) else 2
        dim = _number(dim, "engine.dim", integer=True, positive=True)
        if dim > 8:
            raise ConfigError("engine.dim: at most 8 supported", "engine.dim")
        engine = _section(tree, "engine", EngineConfig, "", {
            "dim": lambda v, p: v,
            "H_E": lambda v, p: _matrix_spec(v, p, dim),
            "initial": lambda v, p: _initial(v, p, dim),
            "schedule": lambda v, p: _schedule_spec(v, p, dim),
        })
        if to_matrix(engine.H_E, dim, "engine.H_E") is IDENTITY:
            raise ConfigError("engine.H_E: identity is not a valid engine Hamiltonian", "engine.H_E")
    else:
        engine = EngineConfig()
    c = _number(tree.get("c", 1.0), "c", positive=True)
    sweep = None
    if "sweep" in tree:
        sweep = _section(tree, "sweep", SweepConfig, "", {
            "axes": _axes,
            "jobs": lambda v, p: _number(v, p, integer=True, positive=True),
            "oracle": lambda v, p: v if isinstance(v, bool) else _bad(p, "expected true/false"),
            "degradation_dispersion": lambda v, p: _dispersion({"degradation_dispersion": v},
                                                               "degradation_dispersion", "sweep"),
        })
    cfg = SimConfig(grid=grid, pulse=pulse, dispersion=disp, windows=windows, stepping=stepping,
                    run=run, engine=engine, c=c, sweep=sweep)
    _cross_checks(cfg)
    return cfg


def _nonnegative(v, path):
    v = _number(v, path)
    if v < 0:
        raise ConfigError(f"{path}: must be non-negative, got {v!r}", path)
    return v


def _power_of_two(v, path):
    n = _number(v, path, integer=True, positive=True)
    if n < 2 or n & (n - 1):
        raise ConfigError(f"{path}: must be a power of two, got {n}", path)
    return n


def _axes(v, path):
    if not isinstance(v, dict) or not v:
        raise ConfigError(f"{path}: expected a non-empty object of axis -> values", path)
    n = 1
    for name, vals in v.items():
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"{path}.{name}: expected a non-empty list", f"{path}.{name}")
        n *= len(vals)
    if n > MAX_SWEEP_POINTS:
        raise ConfigError(f"{path}: {n} sweep points exceed {MAX_SWEEP_POINTS}", path)
    return v


def _cross_checks(cfg: SimConfig) -> None:
    W = cfg.windows.W
    if cfg.stepping.dt > W / cfg.stepping.max_ratio * (1 + 1e-12):
        raise ConfigError(
            f"stepping.dt: {cfg.stepping.dt:g} exceeds W/{cfg.stepping.max_ratio:g}", "stepping.dt")
    if cfg.pulse.omega * W < OMEGA_W_WARN:
        log.warning("pulse width is comparable to the window (omega*W=%.3g)", cfg.pulse.omega * W)


def _line_of(text: str, path: str) -> int | None:
    """Best-effort line number of the last key in a dotted config path."""
    if not path:
        return None
    keys = [re.sub(r"\[\d+\]$", "", k) for k in path.split(".")]
    pos = 0
    for k in keys:
        m = re.compile(r'"%s"\s*:' % re.escape(k)).search(text, pos)
        if m is None:
            break
        pos = m.start()
    else:
        return text.count("\n", 0, pos) + 1
    return None


def loads(text: str, source: str = "<config>") -> SimConfig:
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}", "") from None
    try:
        return from_dict(tree)
    except ConfigError as exc:
        path = exc.args[1] if len(exc.args) > 1 else ""
        line = _line_of(text, path)
        where = f"{source}:{line}" if line else source
        raise ConfigError(f"{where}: {exc.args[0]}", path) from None


def load(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}", "") from None
    cfg = loads(text, str(path))
    # resolve table paths relative to the config file
    if cfg.dispersion.table_path and not Path(cfg.dispersion.table_path).is_absolute():
        cfg.dispersion.table_path = str(path.parent / cfg.dispersion.table_path)
    return cfg


def with_overrides(cfg: SimConfig, deltas: dict) -> SimConfig:
    """Copy of ``cfg`` with dotted-path (or axis alias) values replaced."""
    tree = copy.deepcopy(cfg.to_dict())
    for key, value in deltas.items():
        path = AXIS_ALIASES.get(key, key).split(".")
        node = tree
        for k in path[:-1]:
            node = node.setdefault(k, {})
        node[path[-1]] = value
    tree.pop("sweep", None)
    return from_dict(tree)


# ---------------------------------------------------------------- building

@dataclass
class Setup:
    grid: SpatialGrid
    pulse: ClockPulse
    disp: DispersionRelation
    h_engine: np.ndarray
    schedule: GeneratorSchedule
    step: StepConfig
    state: JointState
    target: TargetEvolution | None
    c: float


def build_dispersion(d: DispersionConfig) -> DispersionRelation:
    if d.kind == "linear":
        return DispersionRelation.linear(d.v_g)
    if d.kind == "massive":
        return DispersionRelation.massive(d.v_g, d.M)
    if d.table is not None:
        arr = np.array(d.table, dtype=float)
    else:
        try:
            arr = np.loadtxt(d.table_path, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"dispersion.table_path: cannot load table: {exc}", "dispersion.table_path") from None
    try:
        return DispersionRelation.tabulated(arr[:, 0], arr[:, 1])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"dispersion.table: {exc}", "dispersion.table") from None


def build_target(spec: dict, dim: int) -> TargetEvolution:
    if spec["kind"] == "constant":
        return TargetEvolution.constant(to_matrix(spec["generator"], dim), spec["duration"])
    gens = [to_matrix(g, dim) for g in spec["generators"]]
    return TargetEvolution.piecewise(spec["breakpoints"], gens, spec["duration"])


def build(cfg: SimConfig) -> Setup:
    grid = SpatialGrid(cfg.grid.n_points, cfg.grid.length, cfg.grid.origin)
    pulse = ClockPulse(cfg.pulse.x0, cfg.pulse.omega, cfg.pulse.k0, cfg.pulse.chirp)
    disp = build_dispersion(cfg.dispersion)
    dim = cfg.engine.dim
    h_engine = to_matrix(cfg.engine.H_E, dim, "engine.H_E")
    w = cfg.windows
    target = None
    sched_spec = cfg.engine.schedule
    if "target" in sched_spec:
        target = build_target(sched_spec["target"], dim)
        tspec = sched_spec["target"]
        try:
            schedule = schedule_from_target(target, w.W, w.pattern, w.origin, tspec.get("n_windows"),
                                            tspec.get("sample_times"))
        except ValueError as exc:
            raise ConfigError(f"engine.schedule.target.sample_times: {exc}",
                              "engine.schedule.target.sample_times") from None
    else:
        gens = [to_matrix(g, dim) for g in sched_spec["generators"]]
        schedule = GeneratorSchedule.from_generators(gens, w.W, w.pattern, w.origin)
    step = StepConfig(cfg.stepping.dt, w.W, cfg.stepping.steps_per_record, cfg.stepping.splitting,
                      cfg.stepping.max_ratio)
    clock = make_gaussian_pulse(grid, pulse)
    if isinstance(cfg.engine.initial, int):
        e = np.zeros(dim, dtype=complex)
        e[cfg.engine.initial] = 1
    else:
        arr = np.array(cfg.engine.initial, dtype=float)
        e = arr[:, 0] + 1j * arr[:, 1]
    return Setup(grid, pulse, disp, h_engine, schedule, step, JointState.product(e, clock), target, cfg.c)
