"""Dead-window control scheme: modulation weights, realized engine channels, fidelities."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .engine import (IDENTITY, PAULI_X, PAULI_Z, GeneratorSchedule, TargetEvolution, as_hermitian,
                     hermitian_propagator, schedule_from_target)
from .errors import QuasimonochromaticWarning, TooLarge
from .joint import JointState, StepConfig, WindowMap, evolve
from .spectral import (ClockAmplitudes, ClockPulse, DispersionRelation, SpatialGrid, free_step,
                       make_gaussian_pulse, position_density)
from . import timeops

__all__ = [
    "MODES",
    "modulation_factors",
    "ModulationObserver",
    "effective_generator",
    "ideal_unitary",
    "realized_channel",
    "choi_of_unitary",
    "entanglement_fidelity",
    "average_gate_fidelity",
    "FidelityReport",
    "protocol_fidelity",
    "state_fidelity",
    "SweepRow",
    "omega_sweep",
]

MODES = ("intensity", "paper_sqrt")
MAX_CHANNEL_DIM = 4


def _window_masses(state, schedule: GeneratorSchedule, window_map: WindowMap | None):
    g = state.grid
    if window_map is None:
        window_map = WindowMap.build(g, schedule.window_width, schedule.origin)
    p = position_density(state.amplitudes, g)
    mean_x = float(np.dot(g.x, p) / p.sum())
    i = math.floor((mean_x - schedule.origin) / schedule.window_width)
    live = 2 * (i // 2)
    p_live = float(p[window_map.index == live].sum())
    p_dead = float(p[window_map.index == live + 1].sum())
    return live, p_live, p_dead


def modulation_factors(state, schedule: GeneratorSchedule, mode: str = "intensity",
                       window_map: WindowMap | None = None) -> tuple[float, float]:
    """Weights ``(alpha, beta)`` of the live generator and the identity.

    The window pair ``(2m, 2m+1)`` is the one holding the pulse's mean
    position.  ``intensity`` uses the probability mass in each window over
    ``W``; ``paper_sqrt`` uses the square root of the mass over ``W``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown modulation mode {mode!r}")
    _, p_live, p_dead = _window_masses(state, schedule, window_map)
    if mode == "paper_sqrt":
        p_live, p_dead = math.sqrt(p_live), math.sqrt(p_dead)
    W = schedule.window_width
    return p_live / W, p_dead / W


class ModulationObserver:
    """Evolve observer adding ``alpha``, ``beta`` and ``mode`` to each record."""

    def __init__(self, schedule: GeneratorSchedule, mode: str = "intensity"):
        if mode not in MODES:
            raise ValueError(f"unknown modulation mode {mode!r}")
        self.schedule = schedule
        self.mode = mode
        self._map = None

    def __call__(self, t, state):
        if self.schedule.pattern != "alternating":
            return {"mode": self.mode}
        if self._map is None or self._map.grid != state.grid:
            self._map = WindowMap.build(state.grid, self.schedule.window_width, self.schedule.origin)
        alpha, beta = modulation_factors(state, self.schedule, self.mode, self._map)
        return {"alpha": alpha, "beta": beta, "mode": self.mode}


def effective_generator(alpha: float, beta: float, v_live) -> np.ndarray:
    """``alpha * v_live``; the ``beta`` identity part is a global phase and is dropped."""
    return alpha * as_hermitian(v_live)


def ideal_unitary(schedule: GeneratorSchedule, h_engine, x_start: float, velocity: float,
                  duration: float) -> np.ndarray:
    """Engine propagator driven by a point-like clock.

    The clock sits at ``x_start + velocity * t``; while it is in window
    ``i`` the engine evolves under ``H_E + g_i / W``.  Dead windows and
    uncovered positions leave ``H_E`` alone (the dead-window phase is
    dropped).
    """
    h_engine = as_hermitian(h_engine)
    d = h_engine.shape[0]
    W, o = schedule.window_width, schedule.origin
    times = [0.0]
    if velocity != 0:
        x_end = x_start + velocity * duration
        lo, hi = sorted((x_start, x_end))
        first, last = math.ceil((lo - o) / W), math.floor((hi - o) / W)
        for i in range(first, last + 1):
            tb = (o + i * W - x_start) / velocity
            if 0 < tb < duration:
                times.append(tb)
    times = sorted(times) + [duration]
    u = np.eye(d, dtype=complex)
    for ta, tb in zip(times, times[1:]):
        if tb <= ta:
            continue
        x_mid = x_start + velocity * (ta + tb) / 2
        g = schedule.generator(math.floor((x_mid - o) / W))
        gen = h_engine if g is None or g is IDENTITY else h_engine + g / W
        u = hermitian_propagator(gen, tb - ta) @ u
    return u


def realized_channel(schedule: GeneratorSchedule, clock: ClockAmplitudes, disp: DispersionRelation,
                     cfg: StepConfig, duration: float, h_engine=None, *, c: float = 1.0,
                     sentinel: float | None = 1e-8, return_states: bool = False):
    """Choi matrix of the engine map induced by a fixed clock pulse.

    ``C = sum_ab |a><b| (x) Lambda(|a><b|)``; by linearity the ``d**2``
    basis-pair inputs reduce to ``d`` evolutions of basis states.
    """
    d = schedule.dim if h_engine is None else np.asarray(h_engine).shape[0]
    if d is None:
        raise ValueError("engine dimension unknown: pass h_engine")
    if d > MAX_CHANNEL_DIM:
        raise TooLarge(f"channel reconstruction limited to d_E <= {MAX_CHANNEL_DIM}, got {d}")
    finals = []
    trajs = []
    for a in range(d):
        e = np.zeros(d)
        e[a] = 1
        tr = evolve(JointState.product(e, clock), schedule, disp, cfg, duration,
                    h_engine=h_engine, c=c, sentinel=sentinel)
        finals.append(tr.final.amplitudes)
        trajs.append(tr)
    amps = np.stack(finals)
    choi = np.einsum("aej,bfj->aebf", amps, amps.conj()).reshape(d * d, d * d) * clock.grid.spacing
    choi = (choi + choi.conj().T) / 2
    if return_states:
        return choi, trajs
    return choi


def choi_of_unitary(u) -> np.ndarray:
    u = np.asarray(u)
    phi = u.T.reshape(-1)
    return np.outer(phi, phi.conj())


def entanglement_fidelity(choi, u) -> float:
    u = np.asarray(u)
    d = u.shape[0]
    phi = u.T.reshape(-1)
    return float(np.real(np.vdot(phi, choi @ phi))) / d**2


def average_gate_fidelity(f_e: float, d: int) -> float:
    return (d * f_e + 1) / (d + 1)


def state_fidelity(rho, psi) -> float:
    """``<psi|rho|psi>`` for a pure reference state."""
    psi = np.asarray(psi)
    return float(np.real(np.vdot(psi, rho @ psi)))


@dataclass
class FidelityReport:
    choi: np.ndarray
    target: np.ndarray
    F_e: float
    F_avg: float
    D_final: float
    mode: str = "intensity"
    max_weight: float = math.nan
    extra: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.target.shape[0]

    def to_text(self) -> str:
        lines = [
            f"dim = {self.dim}",
            f"F_e = {self.F_e:.17g}",
            f"F_avg = {self.F_avg:.17g}",
            f"D_final = {self.D_final:.17g}",
            f"mode = {self.mode}",
            f"max_weight = {self.max_weight:.17g}",
        ]
        lines += [f"{k} = {v:.17g}" if isinstance(v, float) else f"{k} = {v}" for k, v in self.extra.items()]
        for name, mat in (("target", self.target), ("choi", self.choi)):
            lines.append(f"{name} =")
            for row in mat:
                lines.append(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FidelityReport":
        lines = text.splitlines()
        scalars, mats = {}, {}
        k = 0
        while k < len(lines):
            key, _, val = (p.strip() for p in lines[k].partition("="))
            if key in ("target", "choi"):
                n = scalars["dim"] if key == "target" else scalars["dim"] ** 2
                rows = []
                for row in lines[k + 1:k + 1 + n]:
                    nums = np.array(row.split(), dtype=float)
                    rows.append(nums[0::2] + 1j * nums[1::2])
                mats[key] = np.array(rows)
                k += n + 1
                continue
            if key == "dim":
                scalars[key] = int(val)
            elif key == "mode":
                scalars[key] = val
            else:
                try:
                    scalars[key] = float(val)
                except ValueError:
                    scalars[key] = val
            k += 1
        scalars.pop("dim")
        core = {n: scalars.pop(n) for n in ("F_e", "F_avg", "D_final", "mode", "max_weight")}
        return cls(choi=mats["choi"], target=mats["target"], extra=scalars, **core)


def protocol_fidelity(target: TargetEvolution, schedule: GeneratorSchedule, clock: ClockAmplitudes,
                      disp: DispersionRelation, cfg: StepConfig, duration: float, h_engine=None, *,
                      c: float = 1.0, mode: str = "intensity",
                      sentinel: float | None = 1e-8) -> FidelityReport:
    """Compare the realized engine channel with the point-clock construction.

    The reference unitary is :func:`ideal_unitary` for a point clock that
    starts at the pulse's mean position and moves at its mean group
    velocity.  ``D_final`` is the clock degradation of the engine-averaged
    final clock state.
    """
    d = target.dim
    if h_engine is None:
        h_engine = np.zeros((d, d), dtype=complex)
    if schedule.dim not in (None, d):
        raise ValueError("schedule and target dimensions differ")
    choi, trajs = realized_channel(schedule, clock, disp, cfg, duration, h_engine, c=c,
                                   sentinel=sentinel, return_states=True)
    mean_x = timeops.time_stats(clock, 1.0)[0]
    velocity = timeops.lambda_stats(clock, disp, 1.0)[0]
    u_ref = ideal_unitary(schedule, h_engine, mean_x, velocity, duration)
    f_e = entanglement_fidelity(choi, u_ref)
    # engine-averaged clock marginal
    amps = np.concatenate([t.final.amplitudes for t in trajs]) / math.sqrt(d)
    _, var_t = timeops.time_stats(_Stack(clock.grid, amps), c)
    purity = float(np.real(np.trace(choi @ choi))) / d**2
    return FidelityReport(
        choi=choi, target=u_ref, F_e=f_e, F_avg=average_gate_fidelity(f_e, d), D_final=math.sqrt(var_t),
        mode=mode, max_weight=1.0 / schedule.window_width,
        extra={"choi_purity": purity, "truncated": any(t.truncated for t in trajs)},
    )


@dataclass(frozen=True, eq=False)
class _Stack:
    grid: object
    amplitudes: np.ndarray


@dataclass(frozen=True)
class SweepRow:
    omega: float
    F_avg: float
    D: float
    D_protocol: float


def omega_sweep(omegas=(0.5, 1.0, 2.0, 4.0), *, W: float = 10.0, h_engine=None, x0: float = -50.0,
                duration: float = 50.0, dt: float = 0.05, mass: float = 10.0,
                grid: SpatialGrid | None = None) -> list[SweepRow]:
    """Localization trade-off table over the pulse bandwidth ``omega``.

    Each row carries the protocol ``F_avg`` for a fixed piecewise target
    (``sigma_x`` then ``sigma_z``) driven by a linear-dispersion clock, and
    the free-evolution degradation ``D`` of the same pulse under a massive
    dispersion of mass ``mass`` over the same duration.
    """
    if grid is None:
        grid = SpatialGrid(4096, 256.0)
    if h_engine is None:
        h_engine = 0.2 * PAULI_Z
    target = TargetEvolution.piecewise([20.0], [PAULI_X, PAULI_Z], 40.0)
    sched = schedule_from_target(target, W, "alternating", origin=-40.0)
    linear = DispersionRelation.linear(1.0)
    massive = DispersionRelation.massive(1.0, mass)
    rows = []
    for om in omegas:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", QuasimonochromaticWarning)
            clock = make_gaussian_pulse(grid, ClockPulse(x0, om))
        rep = protocol_fidelity(target, sched, clock, linear, StepConfig(dt, W, 10**9), duration, h_engine)
        _, var_free = timeops.time_stats(free_step(clock, massive, duration))
        rows.append(SweepRow(float(om), rep.F_avg, math.sqrt(var_free), rep.D_final))
    return rows
