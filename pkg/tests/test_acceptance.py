"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are collected in ``RESULTS`` and echoed in the terminal summary by
``conftest.py``; run ``pytest tests/test_acceptance.py -v`` to see them.
"""

import json
import math
import time

import numpy as np
import pytest

from clockdyn import checks, cli, timeops
from clockdyn.engine import IDENTITY, PAULI_X, PAULI_Z, GeneratorSchedule, hermitian_propagator
from clockdyn.joint import JointState, StepConfig, evolve, reduced_engine_state
from clockdyn.oracle import build_dense, exact_evolve
from clockdyn.protocol import (average_gate_fidelity, entanglement_fidelity, omega_sweep, realized_channel,
                               state_fidelity)
from clockdyn.spectral import ClockAmplitudes, ClockPulse, DispersionRelation, SpatialGrid, make_gaussian_pulse, \
    sample_gaussian

RESULTS: list[str] = []


def report(n: int, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'} criterion {n:>2}: {detail}"
    RESULTS.append(line)
    print(line)
    assert passed, line


# ---------------------------------------------------------------- shared decoupled runs (criteria 3-6)

K0 = 10.0
MASSES = (5.0, 10.0, 50.0)
# with var_T(0) = 1 and var_Lambda = 1/(4 M^2), the width triples when t^2 = 8 * 4 M^2
DURATION = math.sqrt(8 * 4 * 10.0**2)
N_STEPS = 1200


def _decoupled_run(disp):
    grid = SpatialGrid(4096, 400.0)
    clock = make_gaussian_pulse(grid, ClockPulse(-150.0, 1.0, K0))
    sched = GeneratorSchedule.from_generators([], 10.0)
    cfg = StepConfig(DURATION / N_STEPS, 10.0, steps_per_record=40)
    return evolve(JointState.product([1.0], clock), sched, disp, cfg, DURATION, h_engine=np.zeros((1, 1)))


@pytest.fixture(scope="module")
def runs():
    disps = {"linear": DispersionRelation.linear(1.0), "sine": checks.sine_dispersion()}
    for M in MASSES:
        disps[f"massive M={M:g}"] = DispersionRelation.massive(1.0, M)
    t0 = time.perf_counter()
    out = {name: _decoupled_run(d) for name, d in disps.items()}
    out["_elapsed"] = (time.perf_counter() - t0) / len(disps)
    return out


# ---------------------------------------------------------------- criteria

def test_criterion_01_oracle_equivalence():
    t0 = time.perf_counter()
    dts = np.array([4e-2, 2e-2, 1e-2, 5e-3])
    errs = checks.oracle_errors(dts, duration=1.0)
    order = checks.fit_order(dts, errs)
    elapsed = time.perf_counter() - t0
    ok = errs[2] <= 5e-6 and abs(order - 2.0) <= 0.2 and elapsed < 60
    report(1, ok, f"max deviation at dt=1e-2 {errs[2]:.3e} (<= 5e-6), order {order:.4f} (2 +/- 0.2), "
                  f"{elapsed:.2f} s")


def test_criterion_02_commutator():
    t0 = time.perf_counter()
    res = checks.commutator_residuals()
    elapsed = time.perf_counter() - t0
    report(2, res.size == 20 and res.max() < 1e-6 and elapsed < 10,
           f"max |<[T,H_C]> - i<Lambda>| = {res.max():.3e} over {res.size} states (< 1e-6), {elapsed:.2f} s")


def test_criterion_03_variance_law(runs):
    tr = runs["massive M=10"]
    r0 = tr.records[0]
    t = tr.times
    var = np.array([r.var_T for r in tr.records])
    law = r0.var_T + t**2 * r0.var_Lambda
    worst = float(np.max(np.abs(var - law) / law))
    fit = timeops.degradation_series(tr.records)
    sq_err = abs(fit.sqrt_q - math.sqrt(r0.var_Lambda)) / math.sqrt(r0.var_Lambda)
    width_ratio = math.sqrt(var[-1] / var[0])
    ok = worst < 1e-6 and sq_err < 1e-3 and runs["_elapsed"] < 60
    report(3, ok, f"max relative law residual {worst:.2e} (< 1e-6), sqrt(q) error {sq_err:.2e} (< 1e-3), "
                  f"width x{width_ratio:.4f}, {runs['_elapsed']:.2f} s per run")


def test_criterion_04_dichotomy(runs):
    qs = {name: timeops.degradation_series(tr.records).q for name, tr in runs.items() if name != "_elapsed"}
    nonlinear = {k: v for k, v in qs.items() if k != "linear"}
    ok = abs(qs["linear"]) < 1e-10 and all(v > 1e-8 for v in nonlinear.values())
    detail = ", ".join(f"{k}: {v:.3e}" for k, v in qs.items())
    report(4, ok, f"q ({detail}); linear < 1e-10, others > 1e-8")


def test_criterion_05_pauli_rate(runs):
    lin = timeops.pauli_rate(runs["linear"].records)
    mas = timeops.pauli_rate(runs["massive M=10"].records)
    expected = 1 + K0 / 10.0
    ok = abs(lin - 1.0) < 1e-6 and abs(mas - expected) < 1e-4
    report(5, ok, f"linear slope {lin:.10f} (1 +/- 1e-6), massive slope {mas:.8f} ({expected:g} +/- 1e-4)")


def test_criterion_06_uncertainty(runs):
    margins = []
    for name, tr in runs.items():
        if name == "_elapsed":
            continue
        for rec in tr.records:
            margins.append(timeops.uncertainty_check(rec, tol=1e-9))
    all_ok = all(ok for ok, _ in margins)
    r0 = runs["linear"].records[0]
    sat = abs(math.sqrt(r0.var_T * r0.var_HC) - abs(r0.mean_Lambda) / 2)
    report(6, all_ok and sat < 1e-4,
           f"{len(margins)} records, min margin {min(m for _, m in margins):.3e} (>= -1e-9), "
           f"linear saturation gap at t=0 {sat:.2e} (< 1e-4)")


def test_criterion_07_coupling_degradation():
    grid = SpatialGrid(16, 16.0)
    disp = DispersionRelation.linear(1.0)
    h_e = PAULI_X / 4
    # live sigma_z window on [-8, 0), dead window on [0, 8); the pulse sits on the boundary at 0
    live = GeneratorSchedule.from_generators([PAULI_Z, IDENTITY], 8.0, "alternating", origin=-8.0)
    base = GeneratorSchedule.from_generators([np.zeros((2, 2))] * 2, 8.0, origin=-8.0)
    state = JointState.product([1, 1j], ClockAmplitudes(grid, sample_gaussian(grid, ClockPulse(0.0, 1.0))))
    duration, cfg = 1.0, StepConfig(0.01, 8.0, 10**9)

    def widths(sched):
        split = evolve(state, sched, disp, cfg, duration, h_engine=h_e, sentinel=None).final
        dense = exact_evolve(build_dense(grid, disp, h_e, sched), state, duration)
        return math.sqrt(timeops.time_stats(split)[1]), math.sqrt(timeops.time_stats(dense)[1])

    (s_live, o_live), (s_base, o_base) = widths(live), widths(base)
    ex_split, ex_oracle = s_live - s_base, o_live - o_base
    report(7, ex_split > 1e-5 and ex_oracle > 1e-5,
           f"D - D_decoupled: split-step {ex_split:.3e}, dense oracle {ex_oracle:.3e} (both > 1e-5, N=16)")


def test_criterion_08_dead_and_live_windows():
    grid = SpatialGrid(1024, 128.0)
    disp = DispersionRelation.linear(1.0)
    # dead window [-20, 0) holds the pulse for the whole run
    sched = GeneratorSchedule.from_generators([PAULI_X, IDENTITY, PAULI_X], 20.0, "alternating", origin=-40.0)
    clock = make_gaussian_pulse(grid, ClockPulse(-12.0, 2.0))
    h_e, tau = 0.3 * PAULI_Z, 4.0
    psi0 = np.array([1, 1j]) / math.sqrt(2)
    tr = evolve(JointState.product(psi0, clock), sched, disp, StepConfig(0.05, 20.0, 1000), tau, h_engine=h_e)
    f_dead = state_fidelity(reduced_engine_state(tr.final), hermitian_propagator(h_e, tau) @ psi0)

    W, v = 40.0, PAULI_X
    live = GeneratorSchedule.from_generators([v], W, origin=-40.0)
    clock = make_gaussian_pulse(grid, ClockPulse(-25.0, 2.0))
    choi = realized_channel(live, clock, disp, StepConfig(0.05, W, 1000), tau, np.zeros((2, 2)))
    f_avg = average_gate_fidelity(entanglement_fidelity(choi, hermitian_propagator(v, tau / W)), 2)
    report(8, f_dead >= 1 - 1e-8 and f_avg >= 1 - 1e-3,
           f"dead-window infidelity {max(0.0, 1 - f_dead):.2e} (<= 1e-8), live-window F_avg {f_avg:.8f} (>= 0.999)")


def test_criterion_09_tradeoff_monotone():
    rows = omega_sweep()
    f = np.array([r.F_avg for r in rows])
    d = np.array([r.D for r in rows])
    ok = np.all(np.diff(f) >= -1e-9) and np.all(np.diff(d) >= -1e-9)
    cols = "; ".join(f"omega={r.omega:g}: F_avg={r.F_avg:.6f}, D={r.D:.4f}" for r in rows)
    report(9, bool(ok), f"nondecreasing columns ({cols})")


def test_criterion_10_determinism_and_verify(tmp_path, capsys):
    tree = {
        "grid": {"n_points": 512, "length": 128.0},
        "pulse": {"x0": -20.0, "omega": 1.0, "k0": 3.0},
        "dispersion": {"kind": "massive", "M": 10.0},
        "engine": {"dim": 2, "H_E": {"preset": "pauli_z", "scale": 0.2},
                   "schedule": {"generators": ["pauli_x", "identity", "pauli_z", "identity"]}},
        "windows": {"W": 10.0, "pattern": "alternating", "origin": -30.0},
        "stepping": {"dt": 0.05, "steps_per_record": 20},
        "run": {"duration": 20.0},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(tree))
    codes = [cli.main(["--quiet", "run", "--config", str(path), "--out", str(tmp_path / n)]) for n in "ab"]
    same = (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()
    v_ok = cli.main(["--quiet", "verify"])
    v_fault = cli.main(["--quiet", "verify", "--inject-fault", "dispersion-derivative"])
    capsys.readouterr()
    report(10, codes == [0, 0] and same and v_ok == 0 and v_fault != 0,
           f"CSV byte-identical: {same}; verify exit {v_ok}; verify with fault exit {v_fault}")
