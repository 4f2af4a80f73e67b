"""Dense-matrix reference for small engine x clock instances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import IDENTITY, GeneratorSchedule, as_hermitian
from .errors import TooLarge
from .joint import JointState, WindowMap
from .spectral import DispersionRelation, SpatialGrid

__all__ = ["MAX_DENSE_DIM", "dft_matrix", "DenseJointHamiltonian", "build_dense", "exact_evolve",
           "dense_time_operators", "clock_hamiltonian"]

MAX_DENSE_DIM = 4096


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix ``F[m, j] = exp(-2i pi m j / n) / sqrt(n)``."""
    m = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(m, m) / n) / np.sqrt(n)


def _k_diagonal(grid: SpatialGrid, values: np.ndarray) -> np.ndarray:
    f = dft_matrix(grid.n_points)
    op = f.conj().T @ np.diag(values) @ f
    return (op + op.conj().T) / 2


def clock_hamiltonian(grid: SpatialGrid, disp: DispersionRelation) -> np.ndarray:
    return _k_diagonal(grid, disp.omega(grid.k))


@dataclass(eq=False)
class DenseJointHamiltonian:
    engine: np.ndarray
    clock: np.ndarray
    interaction: np.ndarray
    grid: SpatialGrid
    dim_engine: int
    _eig: tuple = field(default=None, repr=False)

    @property
    def total(self) -> np.ndarray:
        return self.engine + self.clock + self.interaction

    @property
    def dim(self) -> int:
        return self.engine.shape[0]

    def eig(self):
        if self._eig is None:
            self._eig = np.linalg.eigh(self.total)
        return self._eig

    def propagator(self, t: float) -> np.ndarray:
        w, v = self.eig()
        return (v * np.exp(-1j * w * t)) @ v.conj().T

    def energy(self, state: JointState) -> float:
        psi = state.flat()
        return float(np.real(np.vdot(psi, self.total @ psi)))


def build_dense(grid: SpatialGrid, disp: DispersionRelation, h_engine, schedule: GeneratorSchedule,
                window_map: WindowMap | None = None) -> DenseJointHamiltonian:
    """Assemble ``H_E (x) 1 + 1 (x) H_C + sum_i g_i (x) P_i / W``."""
    h_engine = as_hermitian(h_engine)
    d, n = h_engine.shape[0], grid.n_points
    if d * n > MAX_DENSE_DIM:
        raise TooLarge(f"dense dimension {d * n} exceeds {MAX_DENSE_DIM}")
    if window_map is None:
        window_map = WindowMap.build(grid, schedule.window_width, schedule.origin)
    h_c = clock_hamiltonian(grid, disp)
    v = np.zeros((d * n, d * n), dtype=complex)
    for i in window_map.windows():
        g = schedule.generator(int(i))
        if g is None:
            continue
        g = np.eye(d) if g is IDENTITY else g
        proj = np.diag(window_map.mask(int(i)).astype(float))
        v += np.kron(g, proj) / schedule.window_width
    return DenseJointHamiltonian(
        engine=np.kron(h_engine, np.eye(n)), clock=np.kron(np.eye(d), h_c), interaction=v,
        grid=grid, dim_engine=d,
    )


def exact_evolve(h: DenseJointHamiltonian, state: JointState, t: float) -> JointState:
    if h.dim > MAX_DENSE_DIM:
        raise TooLarge(f"dense dimension {h.dim} exceeds {MAX_DENSE_DIM}")
    if t == 0:
        return state
    return JointState.from_flat(state.grid, h.propagator(t) @ state.flat())


def dense_time_operators(grid: SpatialGrid, disp: DispersionRelation, c: float = 1.0):
    """Single-particle ``(T, Lambda, H_C)`` matrices on the clock factor."""
    t_op = np.diag(grid.x / c).astype(complex)
    lam = _k_diagonal(grid, disp.domega(grid.k) / c)
    return t_op, lam, clock_hamiltonian(grid, disp)
