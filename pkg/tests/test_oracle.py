import math

import numpy as np
import pytest
from scipy.linalg import expm

from clockdyn.checks import oracle_errors, oracle_instance, commutator_battery
from clockdyn.engine import PAULI_X, PAULI_Z, GeneratorSchedule
from clockdyn.errors import TooLarge
from clockdyn.joint import JointState, StepConfig, WindowMap, build_interaction_profile, collision_step
from clockdyn.oracle import build_dense, clock_hamiltonian, dense_time_operators, dft_matrix, exact_evolve
from clockdyn.spectral import (ClockAmplitudes, ClockPulse, DispersionRelation, SpatialGrid, free_step,
                               sample_gaussian)


def test_dft_matrix_unitary_and_matches_fft():
    f = dft_matrix(16)
    assert np.max(np.abs(f.conj().T @ f - np.eye(16))) < 1e-13
    v = np.random.default_rng(1).normal(size=16)
    assert np.allclose(f @ v, np.fft.fft(v) / 4)


def test_decoupled_interaction_is_zero():
    g = SpatialGrid(16, 16.0)
    sched = GeneratorSchedule.from_generators([np.zeros((2, 2))] * 2, 8.0, origin=-8.0)
    h = build_dense(g, DispersionRelation.linear(), PAULI_X, sched)
    assert not np.any(h.interaction)


def test_clock_block_spectrum():
    g = SpatialGrid(16, 16.0)
    sched = GeneratorSchedule.from_generators([], 8.0)
    h = build_dense(g, DispersionRelation.linear(1.0), np.zeros((2, 2)), sched)
    ev = np.sort(np.linalg.eigvalsh(h.clock))
    assert np.allclose(ev, np.sort(np.repeat(g.k, 2)), atol=1e-12)


def test_interaction_spectrum_half_grid():
    g = SpatialGrid(16, 16.0)
    W = 8.0
    sched = GeneratorSchedule.from_generators([PAULI_Z], W, origin=-8.0)
    h = build_dense(g, DispersionRelation.linear(), np.zeros((2, 2)), sched)
    ev = np.linalg.eigvalsh(h.interaction)
    assert np.sum(np.isclose(ev, 1 / W)) == 8
    assert np.sum(np.isclose(ev, -1 / W)) == 8
    assert np.sum(np.isclose(ev, 0.0)) == 16


def test_interaction_commutes_with_projectors():
    g = SpatialGrid(16, 16.0)
    sched = GeneratorSchedule.from_generators([PAULI_Z, PAULI_X], 4.0, origin=-4.0)
    h = build_dense(g, DispersionRelation.linear(), np.zeros((2, 2)), sched)
    wm = WindowMap.build(g, 4.0, -4.0)
    for i in wm.windows():
        p = np.kron(np.eye(2), np.diag(wm.mask(int(i)).astype(float)))
        assert np.max(np.abs(h.interaction @ p - p @ h.interaction)) < 1e-15


def test_hermitian_total():
    _, disp, sched, h_e, _ = oracle_instance()
    h = build_dense(SpatialGrid(16, 16.0), DispersionRelation.massive(1.0, 3.0), h_e, sched)
    assert np.max(np.abs(h.total - h.total.conj().T)) < 1e-12


def test_too_large():
    g = SpatialGrid(4096, 100.0)
    with pytest.raises(TooLarge):
        build_dense(g, DispersionRelation.linear(), np.zeros((2, 2)), GeneratorSchedule.from_generators([], 10.0))


def test_exact_evolve_identity_and_unitarity():
    grid, disp, sched, h_e, state = oracle_instance()
    h = build_dense(grid, disp, h_e, sched)
    assert exact_evolve(h, state, 0.0) is state
    u = h.propagator(2.3)
    assert np.max(np.abs(u.conj().T @ u - np.eye(32))) < 1e-11
    out = exact_evolve(h, state, 2.3)
    assert out.norm == pytest.approx(state.norm, abs=1e-11)
    assert h.energy(out) == pytest.approx(h.energy(state), abs=1e-10)


def test_decoupled_oracle_is_product_of_propagators():
    g = SpatialGrid(16, 16.0)
    disp = DispersionRelation.massive(1.0, 2.0)
    h_e = 0.3 * PAULI_X + 0.1 * PAULI_Z
    clock = ClockAmplitudes(g, sample_gaussian(g, ClockPulse(0.0, 1.0)))
    s = JointState.product([1, 0], clock)
    h = build_dense(g, disp, h_e, GeneratorSchedule.from_generators([], 8.0))
    out = exact_evolve(h, s, 1.7)
    ref = JointState.product(expm(-1.7j * h_e) @ [1, 0], free_step(clock, disp, 1.7))
    assert np.max(np.abs(out.amplitudes - ref.amplitudes)) < 1e-10


def test_single_step_local_error_third_order():
    grid, disp, sched, h_e, state = oracle_instance()
    h = build_dense(grid, disp, h_e, sched)
    wm = WindowMap.build(grid, sched.window_width, sched.origin)
    errs = []
    dts = np.array([4e-2, 2e-2, 1e-2])
    for dt in dts:
        cfg = StepConfig(dt, sched.window_width)
        prof = build_interaction_profile(sched, wm, h_e, dt)
        one = collision_step(state, prof, disp, cfg)
        errs.append(np.max(np.abs(one.flat() - exact_evolve(h, state, dt).flat())))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert errs[-1] < 5e-6
    assert slope == pytest.approx(3.0, abs=0.2)


def test_lie_splitting_first_order():
    dts = np.array([4e-2, 2e-2, 1e-2, 5e-3])
    errs = oracle_errors(dts, splitting="lie")
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.2)


def test_linear_lambda_is_identity():
    g = SpatialGrid(64, 32.0)
    _, lam, _ = dense_time_operators(g, DispersionRelation.linear(1.0), c=1.0)
    assert np.max(np.abs(lam - np.eye(64))) < 1e-12


def test_lambda_commutes_with_clock_hamiltonian():
    g = SpatialGrid(64, 32.0)
    for disp in (DispersionRelation.massive(1.0, 5.0), DispersionRelation.tabulated(np.linspace(-20, 20, 801),
                                                                                     np.sin(np.linspace(-20, 20, 801)))):
        _, lam, hc = dense_time_operators(g, disp)
        assert np.max(np.abs(lam @ hc - hc @ lam)) < 1e-12


def test_commutator_expectation_on_battery():
    grid, cases = commutator_battery()
    for disp, clock in cases:
        t_op, lam, hc = dense_time_operators(grid, disp)
        psi = clock.amplitudes * math.sqrt(grid.spacing)
        lhs = np.vdot(psi, (t_op @ hc - hc @ t_op) @ psi)
        assert abs(lhs - 1j * np.vdot(psi, lam @ psi)) < 1e-6


def test_heisenberg_solution():
    """exp(iHt) T exp(-iHt) = T + Lambda t in expectation on interior states."""
    grid, cases = commutator_battery(n_states=6)
    for disp, clock in cases:
        t_op, lam, hc = dense_time_operators(grid, disp)
        w, v = np.linalg.eigh(hc)
        for t in (0.5, 2.0):
            u = (v * np.exp(-1j * w * t)) @ v.conj().T
            th = u.conj().T @ t_op @ u
            psi = clock.amplitudes * math.sqrt(grid.spacing)
            lhs = np.vdot(psi, th @ psi).real
            rhs = np.vdot(psi, (t_op + lam * t) @ psi).real
            assert lhs == pytest.approx(rhs, abs=1e-6)


def test_clock_hamiltonian_matches_fft_phases():
    g = SpatialGrid(32, 16.0)
    disp = DispersionRelation.massive(1.0, 2.0)
    hc = clock_hamiltonian(g, disp)
    psi = np.random.default_rng(4).normal(size=32).astype(complex)
    via_fft = np.fft.ifft(np.fft.fft(psi) * disp.omega(g.k))
    assert np.allclose(hc @ psi, via_fft, atol=1e-12)
