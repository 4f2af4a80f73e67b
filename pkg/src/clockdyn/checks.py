"""Built-in invariant battery behind ``clockdyn verify`` and shared scenario builders."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import timeops
from .engine import IDENTITY, PAULI_X, PAULI_Z, GeneratorSchedule, hermitian_propagator
from .errors import QuasimonochromaticWarning
from .joint import JointState, StepConfig, evolve, reduced_engine_state, schmidt_coefficients
from .oracle import build_dense, dense_time_operators, exact_evolve
from .protocol import realized_channel, state_fidelity
from .spectral import (ClockAmplitudes, ClockPulse, DispersionRelation, SpatialGrid, free_step,
                       make_gaussian_pulse, sample_gaussian)

__all__ = ["Check", "TamperedDispersion", "sine_dispersion", "commutator_battery", "commutator_residuals",
           "oracle_instance", "oracle_errors", "fit_order", "run_battery", "FAULTS"]

FAULTS = ("dispersion-derivative",)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<34} value={self.value:.3e}  tol={self.tolerance:.1e}  {self.detail}"


class TamperedDispersion:
    """Wraps a dispersion and scales its derivative (fault-injection hook)."""

    def __init__(self, base: DispersionRelation, scale: float = 1.01):
        self.base = base
        self.scale = scale
        self.kind = base.kind

    def omega(self, k):
        return self.base.omega(k)

    def domega(self, k):
        return self.scale * self.base.domega(k)


def sine_dispersion(v_g: float = 1.0, amplitude: float = 0.1, k_max: float = 40.0,
                    spacing: float = 1e-3) -> DispersionRelation:
    """Tabulated ``v_g k + amplitude * sin(k)`` on ``[-k_max, k_max]``."""
    k = np.arange(-k_max, k_max + spacing / 2, spacing)
    return DispersionRelation.tabulated(k, v_g * k + amplitude * np.sin(k))


def _quiet_pulse(grid, pulse):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuasimonochromaticWarning)
        return make_gaussian_pulse(grid, pulse)


def commutator_battery(n_states: int = 20, seed: int = 7):
    """Deterministic interior Gaussian states on the 64-point grid, cycling dispersions."""
    grid = SpatialGrid(64, 32.0)
    disps = [DispersionRelation.linear(1.0), DispersionRelation.massive(1.0, 5.0), sine_dispersion()]
    rng = np.random.default_rng(seed)
    cases = []
    for n in range(n_states):
        pulse = ClockPulse(x0=rng.uniform(-2, 2), omega=rng.uniform(0.4, 0.5), k0=rng.uniform(-1.5, 1.5))
        cases.append((disps[n % 3], _quiet_pulse(grid, pulse)))
    return grid, cases


def commutator_residuals(c: float = 1.0, fault: str | None = None) -> np.ndarray:
    """``|<[T, H_C]> - i<Lambda>|`` over the battery, from dense matrices."""
    grid, cases = commutator_battery()
    out = []
    for disp, clock in cases:
        d = TamperedDispersion(disp) if fault == "dispersion-derivative" else disp
        t_op, lam, h_c = dense_time_operators(grid, d, c)
        psi = clock.amplitudes * math.sqrt(grid.spacing)
        comm = t_op @ h_c - h_c @ t_op
        out.append(abs(np.vdot(psi, comm @ psi) - 1j * np.vdot(psi, lam @ psi)))
    return np.array(out)


def oracle_instance():
    """16-point, two-level instance: one live sigma_z window, ``H_E = sigma_x/4``."""
    grid = SpatialGrid(16, 16.0)
    disp = DispersionRelation.linear(1.0)
    W = 8.0
    schedule = GeneratorSchedule.from_generators([PAULI_Z], W, origin=-4.0)
    h_engine = PAULI_X / 4
    clock = ClockAmplitudes(grid, sample_gaussian(grid, ClockPulse(-4.0, 1.0)))
    state = JointState.product([1, 1j], clock)
    return grid, disp, schedule, h_engine, state


def oracle_errors(dts=(4e-2, 2e-2, 1e-2, 5e-3), duration: float = 1.0, splitting: str = "strang"):
    grid, disp, schedule, h_engine, state = oracle_instance()
    ref = exact_evolve(build_dense(grid, disp, h_engine, schedule), state, duration)
    errs = []
    for dt in dts:
        cfg = StepConfig(dt, schedule.window_width, steps_per_record=10**9, splitting=splitting)
        tr = evolve(state, schedule, disp, cfg, duration, h_engine=h_engine, sentinel=None)
        errs.append(float(np.max(np.abs(tr.final.flat() - ref.flat()))))
    return np.array(errs)


def fit_order(dts, errs) -> float:
    return float(np.polyfit(np.log(dts), np.log(errs), 1)[0])


# ---------------------------------------------------------------- battery

def _check(name, value, tol, passed=None, detail=""):
    if passed is None:
        passed = value < tol
    return Check(name, float(value), float(tol), bool(passed), detail)


def _free_norm_drift():
    grid = SpatialGrid(512, 100.0)
    clock = _quiet_pulse(grid, ClockPulse(-20.0, 1.0, 2.0))
    disp = DispersionRelation.massive(1.0, 10.0)
    st = clock
    for _ in range(10_000):
        st = free_step(st, disp, 1e-3)
    return _check("free_step norm drift (1e4 steps)", abs(st.norm - 1.0), 1e-9)


def _spreading_law():
    grid = SpatialGrid(1024, 200.0)
    disp = DispersionRelation.massive(1.0, 10.0)
    clock = _quiet_pulse(grid, ClockPulse(-40.0, 1.0, 5.0))
    _, var0 = timeops.time_stats(clock)
    _, var_l = timeops.lambda_stats(clock, disp)
    worst = 0.0
    for t in (10.0, 20.0, 30.0):
        _, var = timeops.time_stats(free_step(clock, disp, t))
        worst = max(worst, abs(var - (var0 + t**2 * var_l)) / var)
    return _check("free spreading law (relative)", worst, 1e-6)


def _lambda_conservation():
    grid = SpatialGrid(1024, 200.0)
    disp = sine_dispersion()
    clock = _quiet_pulse(grid, ClockPulse(-40.0, 1.0, 5.0))
    r0 = timeops.diagnose(0.0, clock, disp)
    r1 = timeops.diagnose(30.0, free_step(clock, disp, 30.0), disp)
    dev = max(abs(r1.mean_Lambda - r0.mean_Lambda), abs(r1.var_Lambda - r0.var_Lambda),
              abs(r1.mean_HC - r0.mean_HC), abs(r1.var_HC - r0.var_HC))
    return _check("Lambda/H_C conservation", dev, 1e-9)


def _commutator(fault):
    res = commutator_residuals(fault=fault)
    return _check("commutator [T,H_C] = i Lambda", res.max(), 1e-6, detail=f"{res.size} states")


def _oracle_equivalence():
    dts = np.array([4e-2, 2e-2, 1e-2, 5e-3])
    errs = oracle_errors(dts)
    order = fit_order(dts, errs)
    return [
        _check("split-step vs dense (dt=1e-2)", errs[2], 5e-6),
        _check("Strang global order", abs(order - 2.0), 0.2, detail=f"order={order:.3f}"),
    ]


def _energy_conservation():
    grid, disp, schedule, h_engine, state = oracle_instance()
    dense = build_dense(grid, disp, h_engine, schedule)
    e0 = dense.energy(state)
    e1 = dense.energy(exact_evolve(dense, state, 3.0))
    return _check("dense energy conservation", abs(e1 - e0), 1e-10)


def _decoupled_factorization():
    grid = SpatialGrid(256, 64.0)
    disp = DispersionRelation.linear(1.0)
    clock = _quiet_pulse(grid, ClockPulse(-10.0, 1.0, 3.0))
    sched = GeneratorSchedule.from_generators([np.zeros((2, 2))] * 4, 5.0, origin=-10.0)
    tr = evolve(JointState.product([1, 1], clock), sched, disp, StepConfig(0.05, 5.0, 400), 20.0,
                h_engine=PAULI_Z)
    s = schmidt_coefficients(tr.final)
    return _check("decoupled Schmidt number 1", s[1], 1e-10)


def _dead_window_and_channel():
    grid = SpatialGrid(1024, 128.0)
    disp = DispersionRelation.linear(1.0)
    clock = _quiet_pulse(grid, ClockPulse(-10.0, 2.0))
    sched = GeneratorSchedule.from_generators([PAULI_X, IDENTITY, PAULI_X], 20.0, "alternating", origin=-40.0)
    h_e = 0.3 * PAULI_Z
    tau = 4.0
    cfg = StepConfig(0.05, 20.0, 1000)
    psi0 = np.array([1, 1]) / math.sqrt(2)
    tr = evolve(JointState.product(psi0, clock), sched, disp, cfg, tau, h_engine=h_e)
    fid = state_fidelity(reduced_engine_state(tr.final), hermitian_propagator(h_e, tau) @ psi0)
    out = [_check("dead-window neutrality", 1 - fid, 1e-8)]
    choi = realized_channel(sched, clock, disp, cfg, tau, h_e)
    d = 2
    ptrace = np.trace(choi.reshape(d, d, d, d), axis1=1, axis2=3)
    out.append(_check("channel trace preservation", np.max(np.abs(ptrace - np.eye(d))), 1e-8))
    out.append(_check("Choi positivity", max(0.0, -np.linalg.eigvalsh(choi).min()), 1e-8))
    return out


def _uncertainty_saturation():
    grid = SpatialGrid(1024, 100.0)
    clock = _quiet_pulse(grid, ClockPulse(-30.0, 1.0, 10.0))
    rec = timeops.diagnose(0.0, clock, DispersionRelation.linear(1.0))
    ok, margin = timeops.uncertainty_check(rec)
    return _check("uncertainty saturation (linear)", abs(margin), 1e-4, passed=ok and abs(margin) < 1e-4)


def run_battery(fault: str | None = None) -> list[Check]:
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {', '.join(FAULTS)}")
    checks: list[Check] = []
    t0 = time.perf_counter()
    for fn in (_free_norm_drift, _spreading_law, _lambda_conservation, lambda: _commutator(fault),
               _oracle_equivalence, _energy_conservation, _decoupled_factorization,
               _dead_window_and_channel, _uncertainty_saturation):
        res = fn()
        checks.extend(res if isinstance(res, list) else [res])
    checks.append(Check("battery runtime (s, recorded)", time.perf_counter() - t0, math.inf, True))
    return checks
