"""Single-particle clock field on a periodic grid.

The clock is a one-excitation bosonic pulse, so its state is one complex
amplitude per grid point.  Free evolution is diagonal in momentum and is
applied exactly with FFTs.  Amplitudes are normalized so that
``sum(|psi|**2) * spacing == 1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import PulseTooWide, PulseUnresolvable, QuasimonochromaticWarning

__all__ = [
    "SpatialGrid",
    "DispersionRelation",
    "ClockPulse",
    "ClockAmplitudes",
    "sample_gaussian",
    "make_gaussian_pulse",
    "to_momentum",
    "to_position",
    "free_step",
    "free_phases",
    "moments",
    "position_density",
    "momentum_density",
    "edge_mass",
]


@dataclass(frozen=True)
class SpatialGrid:
    n_points: int
    length: float
    origin: float | None = None

    def __post_init__(self):
        n = int(self.n_points)
        if n < 2 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two, got {self.n_points}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")
        object.__setattr__(self, "n_points", n)
        object.__setattr__(self, "length", float(self.length))
        if self.origin is None:
            object.__setattr__(self, "origin", -self.length / 2)
        else:
            object.__setattr__(self, "origin", float(self.origin))

    @property
    def spacing(self) -> float:
        return self.length / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.origin + np.arange(self.n_points) * self.spacing

    @property
    def k(self) -> np.ndarray:
        """Momenta in FFT order, ``2*pi*m/length`` with m in [-n/2, n/2)."""
        return 2 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)

    @property
    def dk(self) -> float:
        return 2 * np.pi / self.length


@dataclass(frozen=True, eq=False)
class DispersionRelation:
    """Clock-field dispersion omega(k) and its derivative.

    Use the ``linear``, ``massive`` and ``tabulated`` constructors.
    ``table`` holds ``(k, omega)`` node arrays for the tabulated kind.
    """

    kind: str
    v_g: float = 1.0
    mass: float | None = None
    table: tuple[np.ndarray, np.ndarray] | None = None
    _splines: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind == "linear":
            pass
        elif self.kind == "massive":
            if self.mass is None or not self.mass > 0:
                raise ValueError("massive dispersion needs mass M > 0")
        elif self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated dispersion needs a (k, omega) table")
            k = np.asarray(self.table[0], dtype=float)
            w = np.asarray(self.table[1], dtype=float)
            if k.ndim != 1 or k.shape != w.shape or k.size < 4:
                raise ValueError("table needs matching 1-d k and omega arrays, >= 4 nodes")
            if np.any(np.diff(k) <= 0):
                raise ValueError("table k values must be strictly increasing")
            if not (np.all(np.isfinite(k)) and np.all(np.isfinite(w))):
                raise ValueError("table entries must be finite")
            # second-order centered differences at the nodes
            dw = np.gradient(w, k, edge_order=2)
            object.__setattr__(self, "table", (k, w))
            object.__setattr__(self, "_splines", (CubicSpline(k, w), CubicSpline(k, dw), dw))
        else:
            raise ValueError(f"unknown dispersion kind {self.kind!r}")

    @classmethod
    def linear(cls, v_g: float = 1.0) -> "DispersionRelation":
        return cls("linear", v_g=float(v_g))

    @classmethod
    def massive(cls, v_g: float = 1.0, mass: float = 10.0) -> "DispersionRelation":
        return cls("massive", v_g=float(v_g), mass=float(mass))

    @classmethod
    def tabulated(cls, k, omega) -> "DispersionRelation":
        return cls("tabulated", table=(np.asarray(k, float), np.asarray(omega, float)))

    def omega(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if self.kind == "linear":
            return self.v_g * k
        if self.kind == "massive":
            return self.v_g * k + k**2 / (2 * self.mass)
        kt, wt = self.table
        w_spl, _, dw = self._splines
        out = w_spl(np.clip(k, kt[0], kt[-1]))
        # continue linearly past the table ends
        out = np.where(k < kt[0], wt[0] + dw[0] * (k - kt[0]), out)
        return np.where(k > kt[-1], wt[-1] + dw[-1] * (k - kt[-1]), out)

    def domega(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if self.kind == "linear":
            return np.full_like(k, self.v_g)
        if self.kind == "massive":
            return self.v_g + k / self.mass
        kt, _ = self.table
        _, dw_spl, dw = self._splines
        out = dw_spl(np.clip(k, kt[0], kt[-1]))
        out = np.where(k < kt[0], dw[0], out)
        return np.where(k > kt[-1], dw[-1], out)

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("linear", "massive"):
            d["v_g"] = self.v_g
        if self.kind == "massive":
            d["M"] = self.mass
        return d


@dataclass(frozen=True)
class ClockPulse:
    """Gaussian pulse: center ``x0``, bandwidth ``omega``, carrier ``k0``.

    ``chirp`` adds a quadratic phase ``exp(1j*chirp*(x-x0)**2)``.
    """

    x0: float
    omega: float
    k0: float = 0.0
    chirp: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"bandwidth omega must be positive, got {self.omega}")


@dataclass(frozen=True, eq=False)
class ClockAmplitudes:
    grid: SpatialGrid
    amplitudes: np.ndarray
    flags: frozenset = frozenset()

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex)
        if a.shape != (self.grid.n_points,):
            raise ValueError(f"expected {self.grid.n_points} amplitudes, got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.spacing)


def sample_gaussian(grid: SpatialGrid, pulse: ClockPulse) -> np.ndarray:
    """Sampled, grid-normalized Gaussian envelope (no resolvability checks)."""
    x = grid.x
    om = pulse.omega
    env = (om**2 / (2 * np.pi)) ** 0.25 * np.exp(-(om**2) * (x - pulse.x0) ** 2 / 4)
    psi = env * np.exp(1j * pulse.k0 * x + 1j * pulse.chirp * (x - pulse.x0) ** 2)
    return psi / np.sqrt(np.sum(np.abs(psi) ** 2) * grid.spacing)


def make_gaussian_pulse(grid: SpatialGrid, pulse: ClockPulse) -> ClockAmplitudes:
    """Build a normalized Gaussian clock pulse on ``grid``.

    Raises PulseUnresolvable when the width ``1/omega`` is below four grid
    spacings and PulseTooWide when the ``6/omega`` tails exceed half the box.
    Broad-band pulses (``omega >= |k0|/5``) only warn.
    """
    width = 1.0 / pulse.omega
    if width < 4 * grid.spacing:
        raise PulseUnresolvable(
            f"pulse width 1/omega={width:g} is below 4 grid spacings ({4 * grid.spacing:g})"
        )
    if 6 * width > grid.length / 2:
        raise PulseTooWide(f"pulse tails 6/omega={6 * width:g} exceed half the grid length")
    flags = set()
    if pulse.omega >= abs(pulse.k0) / 5:
        flags.add("quasimono")
        warnings.warn(
            f"omega={pulse.omega:g} is not small against |k0|/5={abs(pulse.k0) / 5:g}",
            QuasimonochromaticWarning,
            stacklevel=2,
        )
    return ClockAmplitudes(grid, sample_gaussian(grid, pulse), frozenset(flags))


def to_momentum(state: ClockAmplitudes) -> np.ndarray:
    """Continuum-normalized momentum amplitudes, FFT-ordered like ``grid.k``.

    ``sum(|phi|**2) * grid.dk`` equals the position-space norm.
    """
    g = state.grid
    return g.spacing / np.sqrt(2 * np.pi) * np.exp(-1j * g.k * g.origin) * np.fft.fft(state.amplitudes)


def to_position(phi: np.ndarray, grid: SpatialGrid) -> ClockAmplitudes:
    psi = np.fft.ifft(np.asarray(phi) * np.exp(1j * grid.k * grid.origin)) * np.sqrt(2 * np.pi) / grid.spacing
    return ClockAmplitudes(grid, psi)


def free_phases(grid: SpatialGrid, disp: DispersionRelation, dt: float) -> np.ndarray:
    return np.exp(-1j * disp.omega(grid.k) * dt)


def free_step(state: ClockAmplitudes, disp: DispersionRelation, dt: float) -> ClockAmplitudes:
    """Evolve the free clock for time ``dt`` (exact in momentum space)."""
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    if dt == 0:
        return state
    psi = np.fft.ifft(np.fft.fft(state.amplitudes) * free_phases(state.grid, disp, dt))
    return ClockAmplitudes(state.grid, psi, state.flags)


def position_density(amplitudes: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """Clock-marginal probability per grid point (sums over leading axes)."""
    p = np.abs(np.asarray(amplitudes)) ** 2 * grid.spacing
    return p.reshape(-1, grid.n_points).sum(axis=0)


def momentum_density(amplitudes: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """Clock-marginal probability per FFT momentum bin (sums over leading axes)."""
    a = np.asarray(amplitudes).reshape(-1, grid.n_points)
    # |dx/sqrt(2pi) fft|^2 * dk = |fft|^2 * dx / n
    p = np.abs(np.fft.fft(a, axis=-1)) ** 2 * (grid.spacing / grid.n_points)
    return p.sum(axis=0)


def _mean_var(values: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    total = weights.sum()
    mean = float(np.dot(values, weights) / total)
    var = float(np.dot((values - mean) ** 2, weights) / total)
    return mean, max(var, 0.0)


def moments(state) -> tuple[float, float, float, float]:
    """Return ``(mean_x, var_x, mean_k, var_k)`` of the clock marginal."""
    g = state.grid
    mx, vx = _mean_var(g.x, position_density(state.amplitudes, g))
    mk, vk = _mean_var(g.k, momentum_density(state.amplitudes, g))
    return mx, vx, mk, vk


def edge_mass(amplitudes: np.ndarray, grid: SpatialGrid, fraction: float = 0.05) -> float:
    """Probability in the outermost ``fraction`` of the grid at each end."""
    p = position_density(amplitudes, grid)
    m = max(1, int(np.ceil(fraction * grid.n_points)))
    return float(p[:m].sum() + p[-m:].sum())
