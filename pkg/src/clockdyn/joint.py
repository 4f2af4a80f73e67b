"""Joint engine x clock evolution with a split-step spectral integrator.

The state is stored as amplitudes ``psi[e, j]`` (engine basis index ``e``,
grid point ``j``).  The coupling is piecewise constant over position
windows, so the interaction step is a local ``d x d`` unitary per grid
point; free clock motion is a momentum-space phase.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import timeops
from .engine import IDENTITY, GeneratorSchedule, as_hermitian, hermitian_propagator
from .errors import WindowGridMisaligned
from .spectral import ClockAmplitudes, DispersionRelation, SpatialGrid, edge_mass, free_phases

__all__ = [
    "JointState",
    "StepConfig",
    "WindowMap",
    "InteractionProfile",
    "Trajectory",
    "build_interaction_profile",
    "collision_step",
    "evolve",
    "reduced_engine_state",
    "schmidt_coefficients",
    "dump_state",
    "load_state",
]

STATE_MAGIC = b"QCLK"
STATE_VERSION = 1
_HEADER = struct.Struct("<4sIIIdd")
HEADER_SIZE = 64


@dataclass(frozen=True, eq=False)
class JointState:
    grid: SpatialGrid
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex)
        if a.ndim != 2 or a.shape[1] != self.grid.n_points:
            raise ValueError(f"amplitudes must have shape (d_E, {self.grid.n_points}), got {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def product(cls, engine_state, clock: ClockAmplitudes) -> "JointState":
        v = np.asarray(engine_state, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(clock.grid, np.outer(v, clock.amplitudes))

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.spacing)

    def flat(self) -> np.ndarray:
        """Unit-norm vector in the ``engine (x) grid`` ordering of the dense oracle."""
        return self.amplitudes.reshape(-1) * math.sqrt(self.grid.spacing)

    @classmethod
    def from_flat(cls, grid: SpatialGrid, vec: np.ndarray) -> "JointState":
        return cls(grid, np.asarray(vec).reshape(-1, grid.n_points) / math.sqrt(grid.spacing))


@dataclass(frozen=True)
class StepConfig:
    """Time step, window width and recording cadence.

    ``dt`` must not exceed ``window_width / max_ratio``.
    """

    dt: float
    window_width: float
    steps_per_record: int = 1
    splitting: str = "strang"
    max_ratio: float = 100.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.splitting not in ("strang", "lie"):
            raise ValueError(f"splitting must be 'strang' or 'lie', got {self.splitting!r}")
        if self.steps_per_record < 1:
            raise ValueError("steps_per_record must be >= 1")
        if self.dt > self.window_width / self.max_ratio * (1 + 1e-12):
            raise ValueError(
                f"dt={self.dt:g} exceeds W/{self.max_ratio:g}={self.window_width / self.max_ratio:g}"
            )


@dataclass(frozen=True, eq=False)
class WindowMap:
    """Window index of every grid point, with boundaries snapped to the grid."""

    grid: SpatialGrid
    window_width: float
    origin: float
    index: np.ndarray

    @classmethod
    def build(cls, grid: SpatialGrid, window_width: float, origin: float = 0.0,
              tol: float = 0.5) -> "WindowMap":
        dx = grid.spacing
        W = float(window_width)
        lo = math.floor((grid.origin - origin) / W) - 1
        hi = math.ceil((grid.origin + grid.length - origin) / W) + 1
        ids = np.arange(lo, hi + 1)
        rel = (origin + ids * W - grid.origin) / dx
        snapped = np.rint(rel).astype(int)
        inside = (snapped >= 0) & (snapped <= grid.n_points)
        miss = np.abs(rel - snapped)[inside]
        if miss.size and miss.max() > tol:
            raise WindowGridMisaligned(
                f"window boundary misses the grid by {miss.max():.3g} spacings (tolerance {tol:g})"
            )
        if np.any(np.diff(snapped[inside]) <= 0):
            raise WindowGridMisaligned(f"window width {W:g} leaves a window without grid points")
        index = lo + np.searchsorted(snapped, np.arange(grid.n_points), side="right") - 1
        index.setflags(write=False)
        return cls(grid, W, float(origin), index)

    def windows(self) -> np.ndarray:
        return np.unique(self.index)

    def mask(self, i: int) -> np.ndarray:
        return self.index == i


@dataclass(frozen=True, eq=False)
class InteractionProfile:
    """Per-window local generators ``H_E + g_i/W`` and their step unitaries."""

    window_map: WindowMap
    dt: float
    h_engine: np.ndarray
    generators: dict
    unitaries: dict
    point_generators: np.ndarray
    point_unitaries: np.ndarray

    @property
    def dim(self) -> int:
        return self.h_engine.shape[0]


def build_interaction_profile(schedule: GeneratorSchedule, window_map: WindowMap, h_engine=None,
                              dt: float = 0.0, dim: int | None = None) -> InteractionProfile:
    """Precompute ``U_i(dt) = exp(-1j (H_E + g_i/W) dt)`` for every window on the grid.

    Dead windows get ``exp(-1j H_E dt) * exp(-1j dt/W)``; positions outside
    the schedule carry no coupling.
    """
    if h_engine is None:
        d = dim or schedule.dim
        if d is None:
            raise ValueError("engine dimension unknown: pass h_engine or dim")
        h_engine = np.zeros((d, d), dtype=complex)
    h_engine = as_hermitian(h_engine)
    d = h_engine.shape[0]
    if schedule.dim not in (None, d):
        raise ValueError(f"schedule generators are {schedule.dim}-dimensional, engine is {d}")
    W = schedule.window_width
    u_free = hermitian_propagator(h_engine, dt)
    gens, units = {}, {}
    for i in window_map.windows():
        i = int(i)
        g = schedule.generator(i)
        if g is None:
            gens[i] = h_engine
            units[i] = u_free
        elif g is IDENTITY:
            gens[i] = h_engine + np.eye(d) / W
            units[i] = u_free * np.exp(-1j * dt / W)
        else:
            gens[i] = h_engine + g / W
            units[i] = hermitian_propagator(gens[i], dt)
    idx = window_map.index
    pg = np.stack([gens[int(i)] for i in idx])
    pu = np.stack([units[int(i)] for i in idx])
    return InteractionProfile(window_map, float(dt), h_engine, gens, units, pg, pu)


def _apply_local(amps: np.ndarray, point_unitaries: np.ndarray) -> np.ndarray:
    return np.einsum("jab,bj->aj", point_unitaries, amps)


def _apply_phase(amps: np.ndarray, phases: np.ndarray) -> np.ndarray:
    return np.fft.ifft(np.fft.fft(amps, axis=-1) * phases, axis=-1)


def collision_step(state: JointState, profile: InteractionProfile, disp: DispersionRelation,
                   cfg: StepConfig) -> JointState:
    """One time step ``cfg.dt``.

    Strang: half free clock step, local step (engine Hamiltonian plus
    coupling), half free clock step.  Lie: local step then a full free step.
    """
    if not math.isclose(profile.dt, cfg.dt, rel_tol=1e-14):
        raise ValueError("interaction profile was built for a different dt")
    a = state.amplitudes
    if cfg.splitting == "strang":
        half = free_phases(state.grid, disp, cfg.dt / 2)
        a = _apply_phase(a, half)
        a = _apply_local(a, profile.point_unitaries)
        a = _apply_phase(a, half)
    else:
        a = _apply_local(a, profile.point_unitaries)
        a = _apply_phase(a, free_phases(state.grid, disp, cfg.dt))
    return JointState(state.grid, a)


def _advance(a: np.ndarray, n: int, profile: InteractionProfile, half, full, splitting: str) -> np.ndarray:
    """``n`` consecutive steps with the inner Strang half-steps fused."""
    if n == 0:
        return a
    if splitting == "strang":
        a = _apply_phase(a, half)
        for s in range(n):
            a = _apply_local(a, profile.point_unitaries)
            a = _apply_phase(a, full if s < n - 1 else half)
    else:
        for _ in range(n):
            a = _apply_phase(_apply_local(a, profile.point_unitaries), full)
    return a


@dataclass
class Trajectory:
    records: list
    final: JointState
    truncated: bool = False

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])


Observer = Callable[[float, JointState], dict]


def evolve(state: JointState, schedule: GeneratorSchedule, disp: DispersionRelation, cfg: StepConfig,
           duration: float, observers: Sequence[Observer] = (), *, h_engine=None, c: float = 1.0,
           sentinel: float | None = 1e-8, window_map: WindowMap | None = None,
           profile: InteractionProfile | None = None) -> Trajectory:
    """Run ``duration / cfg.dt`` collision steps, recording diagnostics.

    A record is taken at ``t = 0`` and every ``cfg.steps_per_record`` steps
    (plus the final step).  Each observer is called as ``obs(t, state)`` and
    returns extra record fields.  When more than ``sentinel`` probability
    sits in the outer 5% of the grid, the record is flagged ``wraparound``
    and the run stops there with ``truncated=True``.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    n_steps = int(round(duration / cfg.dt))
    if abs(n_steps * cfg.dt - duration) > 1e-9 * max(1.0, duration):
        raise ValueError(f"duration {duration:g} is not a whole number of steps dt={cfg.dt:g}")
    if not math.isclose(cfg.window_width, schedule.window_width, rel_tol=1e-12):
        raise ValueError("StepConfig.window_width differs from the schedule window width")
    grid = state.grid
    if profile is None:
        if window_map is None:
            window_map = WindowMap.build(grid, schedule.window_width, schedule.origin)
        profile = build_interaction_profile(schedule, window_map, h_engine, cfg.dt, dim=state.dim)
    if profile.dim != state.dim:
        raise ValueError(f"engine dimension {profile.dim} does not match state dimension {state.dim}")
    half = free_phases(grid, disp, cfg.dt / 2)
    full = free_phases(grid, disp, cfg.dt)

    var_T0 = None

    def record(t, st):
        nonlocal var_T0
        rec = timeops.diagnose(t, st, disp, c, profile=profile, var_T0=var_T0)
        if var_T0 is None:
            var_T0 = rec.var_T
        for obs in observers:
            extra = dict(obs(t, st))
            flag = extra.pop("flags", "")
            rec = replace(rec, **extra)
            for f in filter(None, flag.split("|")):
                rec = rec.with_flag(f)
        if sentinel is not None and edge_mass(st.amplitudes, grid) > sentinel:
            rec = rec.with_flag("wraparound")
        return rec

    records = [record(0.0, state)]
    if "wraparound" in records[-1].flags:
        return Trajectory(records, state, truncated=True)
    a = state.amplitudes
    done = 0
    while done < n_steps:
        m = min(cfg.steps_per_record, n_steps - done)
        a = _advance(a, m, profile, half, full, cfg.splitting)
        done += m
        st = JointState(grid, a)
        records.append(record(done * cfg.dt, st))
        if "wraparound" in records[-1].flags:
            return Trajectory(records, st, truncated=True)
    return Trajectory(records, JointState(grid, a))


def reduced_engine_state(state: JointState) -> np.ndarray:
    a = state.amplitudes
    rho = (a @ a.conj().T) * state.grid.spacing
    return (rho + rho.conj().T) / 2


def schmidt_coefficients(state: JointState) -> np.ndarray:
    return np.linalg.svd(state.amplitudes * math.sqrt(state.grid.spacing), compute_uv=False)


def dump_state(state: JointState, path) -> None:
    """Write the 64-byte little-endian header followed by complex128 amplitudes."""
    g = state.grid
    header = _HEADER.pack(STATE_MAGIC, STATE_VERSION, state.dim, g.n_points, g.spacing, g.origin)
    header = header.ljust(HEADER_SIZE, b"\0")
    body = np.ascontiguousarray(state.amplitudes, dtype="<c16").tobytes()
    Path(path).write_bytes(header + body)


def load_state(path) -> JointState:
    raw = Path(path).read_bytes()
    magic, version, d, n, spacing, origin = _HEADER.unpack_from(raw, 0)
    if magic != STATE_MAGIC:
        raise ValueError(f"{path}: not a clock state file (magic {magic!r})")
    if version != STATE_VERSION:
        raise ValueError(f"{path}: unsupported state version {version}")
    amps = np.frombuffer(raw, dtype="<c16", offset=HEADER_SIZE)
    if amps.size != d * n:
        raise ValueError(f"{path}: expected {d * n} amplitudes, found {amps.size}")
    grid = SpatialGrid(n, spacing * n, origin)
    return JointState(grid, amps.reshape(d, n))
