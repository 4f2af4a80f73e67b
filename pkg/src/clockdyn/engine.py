"""Engine Hilbert space: Hermitian generators, window schedules, target evolutions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NonConvergent, NotHermitian

__all__ = [
    "IDENTITY",
    "PAULI_X",
    "PAULI_Y",
    "PAULI_Z",
    "preset",
    "as_hermitian",
    "hermitian_propagator",
    "Window",
    "GeneratorSchedule",
    "TargetEvolution",
    "target_propagator",
    "schedule_from_target",
]

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

MAX_ENGINE_DIM = 8


class _Identity:
    """Marker for a dead window: the generator is the identity operator."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "IDENTITY"

    def __reduce__(self):
        return (_Identity, ())


IDENTITY = _Identity()


def preset(name: str, dim: int = 2) -> np.ndarray:
    """Named generator presets.

    ``jaynes_cummings_detuning`` is ``sz/2 (x) 1_n - 1_2 (x) a^dag a`` on a
    qubit times an ``n = dim/2`` level mode; for ``dim == 2`` it is ``sz/2``.
    """
    if name in ("pauli_x", "pauli_y", "pauli_z"):
        if dim != 2:
            raise ValueError(f"preset {name!r} needs dim 2, got {dim}")
        return {"pauli_x": PAULI_X, "pauli_y": PAULI_Y, "pauli_z": PAULI_Z}[name].copy()
    if name == "number":
        return np.diag(np.arange(dim)).astype(complex)
    if name == "jaynes_cummings_detuning":
        if dim % 2:
            raise ValueError("jaynes_cummings_detuning needs an even dimension")
        n = dim // 2
        return np.kron(PAULI_Z / 2, np.eye(n)) - np.kron(np.eye(2), np.diag(np.arange(n))).astype(complex)
    if name == "zero":
        return np.zeros((dim, dim), dtype=complex)
    raise ValueError(f"unknown generator preset {name!r}")


def as_hermitian(h, tol: float = 1e-12) -> np.ndarray:
    h = np.array(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise NotHermitian(f"generator must be a square matrix, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise NotHermitian("generator has non-finite entries")
    err = np.max(np.abs(h - h.conj().T)) if h.size else 0.0
    if err >= tol:
        raise NotHermitian(f"generator deviates from Hermitian by {err:.3g}")
    return (h + h.conj().T) / 2


def hermitian_propagator(h, theta: float) -> np.ndarray:
    """``exp(-1j * h * theta)`` through the eigendecomposition of ``h``.

    ``h`` may be a stack of matrices (shape ``(..., d, d)``).
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim == 2:
        h = as_hermitian(h)
    evals, evecs = np.linalg.eigh(h)
    phases = np.exp(-1j * evals * theta)
    return (evecs * phases[..., None, :]) @ np.swapaxes(evecs.conj(), -1, -2)


@dataclass(frozen=True, eq=False)
class Window:
    index: int
    center: float
    generator: object  # ndarray or IDENTITY

    @property
    def is_identity(self) -> bool:
        return self.generator is IDENTITY


@dataclass(frozen=True, eq=False)
class GeneratorSchedule:
    """Window-indexed engine generators.

    Window ``i`` covers ``[origin + i*W, origin + (i+1)*W)``; its default
    sampling point is the center.  Positions outside every listed window
    carry no coupling.
    """

    window_width: float
    windows: tuple
    pattern: str = "explicit"
    origin: float = 0.0

    def __post_init__(self):
        if not self.window_width > 0:
            raise ValueError(f"window width must be positive, got {self.window_width}")
        if self.pattern not in ("explicit", "alternating"):
            raise ValueError(f"unknown pattern {self.pattern!r}")
        dims = {w.generator.shape[0] for w in self.windows if not w.is_identity}
        if len(dims) > 1:
            raise ValueError(f"generators have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "windows", tuple(self.windows))

    @classmethod
    def from_generators(cls, generators: Sequence, window_width: float, pattern: str = "explicit",
                        origin: float = 0.0, centers: Sequence[float] | None = None) -> "GeneratorSchedule":
        """Window ``i`` gets ``generators[i]``; with ``pattern='alternating'``
        odd windows are replaced by the identity."""
        wins = []
        for i, g in enumerate(generators):
            if pattern == "alternating" and i % 2 == 1:
                g = IDENTITY
            elif g is not IDENTITY:
                g = as_hermitian(g)
            center = origin + (i + 0.5) * window_width if centers is None else float(centers[i])
            wins.append(Window(i, center, g))
        return cls(float(window_width), tuple(wins), pattern, float(origin))

    @property
    def dim(self) -> int | None:
        for w in self.windows:
            if not w.is_identity:
                return w.generator.shape[0]
        return None

    def window_center(self, i: int) -> float:
        return self.origin + (i + 0.5) * self.window_width

    def generator(self, i: int):
        """Generator of window ``i``: matrix, IDENTITY, or None if uncovered."""
        for w in self.windows:
            if w.index == i:
                return w.generator
        return None

    def is_live(self, i: int) -> bool:
        g = self.generator(i)
        return g is not None and g is not IDENTITY


@dataclass(frozen=True, eq=False)
class TargetEvolution:
    """Time-dependent engine generator ``V_E(t)`` on ``[0, duration]``."""

    sampler: Callable[[float], np.ndarray]
    duration: float
    dim: int
    breakpoints: tuple = ()

    @classmethod
    def constant(cls, v, duration: float) -> "TargetEvolution":
        v = as_hermitian(v)
        return cls(lambda t: v, float(duration), v.shape[0])

    @classmethod
    def piecewise(cls, breakpoints: Sequence[float], generators: Sequence, duration: float) -> "TargetEvolution":
        """``generators[j]`` acts on ``[breakpoints[j-1], breakpoints[j])``
        (with implicit 0 and ``duration`` at the ends)."""
        gens = [as_hermitian(g) for g in generators]
        bps = tuple(float(b) for b in breakpoints)
        if len(gens) != len(bps) + 1:
            raise ValueError("piecewise target needs one more generator than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be increasing")

        def sampler(t):
            return gens[int(np.searchsorted(bps, t, side="right"))]

        return cls(sampler, float(duration), gens[0].shape[0], bps)

    @classmethod
    def modulated(cls, f: Callable[[float], float], v, duration: float) -> "TargetEvolution":
        v = as_hermitian(v)
        return cls(lambda t: f(t) * v, float(duration), v.shape[0])

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.sampler(t), dtype=complex)


def _ordered_product(target: TargetEvolution, t: float, n: int, rule: str) -> np.ndarray:
    dt = t / n
    offset = 0.5 if rule == "midpoint" else 0.0
    hs = np.stack([target((j + offset) * dt) for j in range(n)])
    us = hermitian_propagator(hs, dt)
    # pairwise reduction keeps later factors on the left
    while len(us) > 1:
        if len(us) % 2:
            us = np.concatenate([us, np.eye(target.dim, dtype=complex)[None]])
        us = us[1::2] @ us[0::2]
    return us[0]


def target_propagator(target: TargetEvolution, t: float, n_substeps: int = 8192, *,
                      rule: str = "midpoint", tol: float = 1e-8, adaptive: bool = True) -> np.ndarray:
    """Time-ordered propagator of ``target`` over ``[0, t]``.

    Product of ``exp(-1j V(t_j) dt)`` with the latest factor leftmost.
    ``rule='midpoint'`` samples substep centers (second order);
    ``rule='left'`` samples left ends (first order).  With ``adaptive`` the
    substep count is doubled until two successive products agree to ``tol``
    (max-abs entry); two doublings without agreement raise NonConvergent.
    """
    if rule not in ("midpoint", "left"):
        raise ValueError(f"unknown rule {rule!r}")
    if t == 0:
        return np.eye(target.dim, dtype=complex)
    u = _ordered_product(target, t, n_substeps, rule)
    if not adaptive:
        return u
    n = n_substeps
    for _ in range(2):
        n *= 2
        u2 = _ordered_product(target, t, n, rule)
        if np.max(np.abs(u2 - u)) < tol:
            return u2
        u = u2
    raise NonConvergent(f"target propagator not converged to {tol:g} with {n} substeps")


def schedule_from_target(target: TargetEvolution, window_width: float, pattern: str = "explicit",
                         origin: float = 0.0, n_windows: int | None = None,
                         sample_times: dict | None = None) -> GeneratorSchedule:
    """Sample ``target`` at window centers.

    Window ``i`` is centered at target time ``(i + 1/2) W``; the window count
    covers the target duration, and windows centered past the end are
    identity padding.  ``pattern='alternating'`` makes odd windows identity.
    ``sample_times`` maps a window index to a sample time inside that window,
    replacing its center.
    """
    if not window_width > 0:
        raise ValueError("window width must be positive")
    if n_windows is None:
        n_windows = max(1, math.ceil(target.duration / window_width - 1e-12))
    sample_times = {int(i): float(s) for i, s in (sample_times or {}).items()}
    for i, s in sample_times.items():
        if not (0 <= i < n_windows and i * window_width <= s <= (i + 1) * window_width):
            raise ValueError(f"sample time {s:g} lies outside window {i}")
    gens = []
    for i in range(n_windows):
        s = sample_times.get(i, (i + 0.5) * window_width)
        gens.append(target(s) if s <= target.duration else IDENTITY)
    return GeneratorSchedule.from_generators(gens, window_width, pattern, origin)
