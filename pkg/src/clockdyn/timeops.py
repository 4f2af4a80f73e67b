"""Time-operator diagnostics for the clock.

The time operator is position over ``c``; ``Lambda`` is ``omega'(k)/c``
diagonal in momentum.  All statistics are taken on the clock marginal,
so engine indices are summed over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import InsufficientRecords, StationaryState
from .spectral import DispersionRelation, momentum_density, position_density

__all__ = [
    "CSV_COLUMNS",
    "DiagnosticsRecord",
    "time_stats",
    "lambda_stats",
    "hc_stats",
    "time_lambda_covariance",
    "diagnose",
    "DegradationFit",
    "degradation_series",
    "uncertainty_check",
    "pauli_rate",
]

CSV_COLUMNS = (
    "t", "mean_T", "var_T", "D", "D_excess", "mean_Lambda", "var_Lambda", "mean_HC", "var_HC",
    "bound", "norm", "energy", "purity_E", "alpha", "beta", "mode", "flags",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mean_T: float
    var_T: float
    D: float
    D_excess: float
    mean_Lambda: float
    var_Lambda: float
    mean_HC: float
    var_HC: float
    bound: float
    norm: float
    energy: float
    purity_E: float
    alpha: float = math.nan
    beta: float = math.nan
    mode: str = ""
    flags: str = ""

    def as_row(self) -> list[str]:
        out = []
        for name in CSV_COLUMNS:
            v = getattr(self, name)
            out.append(v if isinstance(v, str) else format(float(v), ".17g"))
        return out

    @classmethod
    def from_row(cls, row: dict) -> "DiagnosticsRecord":
        kw = {}
        for f in fields(cls):
            v = row[f.name]
            kw[f.name] = v if f.type == "str" else float(v)
        return cls(**kw)

    def with_flag(self, flag: str) -> "DiagnosticsRecord":
        parts = [p for p in self.flags.split("|") if p]
        if flag not in parts:
            parts.append(flag)
        return replace(self, flags="|".join(sorted(parts)))


def _amps(state) -> np.ndarray:
    return np.asarray(state.amplitudes).reshape(-1, state.grid.n_points)


def _weighted(values, weights):
    total = weights.sum()
    mean = float(np.dot(values, weights) / total)
    var = float(np.dot((values - mean) ** 2, weights) / total)
    return mean, max(var, 0.0)


def time_stats(state, c: float = 1.0) -> tuple[float, float]:
    """Mean and variance of the time operator on the clock marginal."""
    g = state.grid
    return _weighted(g.x / c, position_density(_amps(state), g))


def lambda_stats(state, disp: DispersionRelation, c: float = 1.0) -> tuple[float, float]:
    g = state.grid
    return _weighted(disp.domega(g.k) / c, momentum_density(_amps(state), g))


def hc_stats(state, disp: DispersionRelation) -> tuple[float, float]:
    g = state.grid
    return _weighted(disp.omega(g.k), momentum_density(_amps(state), g))


def time_lambda_covariance(state, disp: DispersionRelation, c: float = 1.0) -> float:
    """Symmetrized covariance ``Re<T Lambda> - <T><Lambda>``."""
    g = state.grid
    a = _amps(state)
    lam_a = np.fft.ifft(np.fft.fft(a, axis=-1) * (disp.domega(g.k) / c), axis=-1)
    norm = np.sum(np.abs(a) ** 2) * g.spacing
    t_lam = np.real(np.sum(np.conj(a) * (g.x / c) * lam_a)) * g.spacing / norm
    mean_t, _ = time_stats(state, c)
    mean_l, _ = lambda_stats(state, disp, c)
    return float(t_lam - mean_t * mean_l)


def diagnose(t: float, state, disp: DispersionRelation, c: float = 1.0, *, h_engine=None,
             profile=None, var_T0: float | None = None) -> DiagnosticsRecord:
    """Snapshot diagnostics of a clock or joint state at time ``t``.

    ``profile`` (an InteractionProfile) supplies the local engine part of
    the energy; without it only ``h_engine`` is added to ``<H_C>``.
    """
    g = state.grid
    a = _amps(state)
    mean_T, var_T = time_stats(state, c)
    mean_L, var_L = lambda_stats(state, disp, c)
    mean_H, var_H = hc_stats(state, disp)
    norm = float(np.sum(np.abs(a) ** 2) * g.spacing)
    rho = (a @ a.conj().T) * g.spacing
    purity = float(np.real(np.trace(rho @ rho)))
    energy = mean_H * norm
    if profile is not None:
        energy += float(np.real(np.einsum("aj,jab,bj->", a.conj(), profile.point_generators, a))) * g.spacing
    elif h_engine is not None:
        energy += float(np.real(np.trace(np.asarray(h_engine) @ rho)))
    if var_T0 is None:
        var_T0 = var_T
    bound = abs(mean_L) / (2 * math.sqrt(var_H)) if var_H > 0 else math.inf
    return DiagnosticsRecord(
        t=float(t), mean_T=mean_T, var_T=var_T, D=math.sqrt(var_T),
        D_excess=math.sqrt(max(var_T - var_T0, 0.0)), mean_Lambda=mean_L, var_Lambda=var_L,
        mean_HC=mean_H, var_HC=var_H, bound=bound, norm=norm, energy=energy, purity_E=purity,
    )


@dataclass(frozen=True)
class DegradationFit:
    """Quadratic fit ``var_T(t) = a + b t + q t**2`` of a free run."""

    t: np.ndarray
    D: np.ndarray
    D_excess: np.ndarray
    a: float
    b: float
    q: float
    var_Lambda: float
    max_residual: float

    @property
    def sqrt_q(self) -> float:
        return math.sqrt(max(self.q, 0.0))


def degradation_series(records, min_records: int = 10) -> DegradationFit:
    if len(records) < min_records:
        raise InsufficientRecords(f"need at least {min_records} records, got {len(records)}")
    t = np.array([r.t for r in records])
    var = np.array([r.var_T for r in records])
    q, b, a = np.polyfit(t, var, 2)
    resid = var - (a + b * t + q * t**2)
    return DegradationFit(
        t=t, D=np.sqrt(var), D_excess=np.sqrt(np.maximum(var - var[0], 0.0)),
        a=float(a), b=float(b), q=float(q), var_Lambda=float(records[0].var_Lambda),
        max_residual=float(np.max(np.abs(resid))),
    )


def uncertainty_check(record: DiagnosticsRecord, tol: float = 1e-9) -> tuple[bool, float]:
    """Check ``Delta T * Delta H_C >= |<Lambda>|/2``; returns ``(ok, margin)``."""
    if record.var_HC <= 1e-20 * max(1.0, record.mean_HC**2):
        raise StationaryState("clock state has zero energy spread; it cannot keep time")
    margin = math.sqrt(record.var_T) * math.sqrt(record.var_HC) - abs(record.mean_Lambda) / 2
    return margin >= -tol, margin


def pauli_rate(records, n_excitations: int = 1) -> float:
    """Least-squares slope of the rescaled time operator against ``t``."""
    t = np.array([r.t for r in records])
    mean_t = np.array([r.mean_T for r in records]) / n_excitations
    slope, _ = np.polyfit(t, mean_t, 1)
    return float(slope)
