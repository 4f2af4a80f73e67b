"""Single-particle clock pulses driving a finite-dimensional engine."""

from .engine import (IDENTITY, PAULI_X, PAULI_Y, PAULI_Z, GeneratorSchedule, TargetEvolution, hermitian_propagator,
                     preset, schedule_from_target, target_propagator)
from .errors import ClockDynError, ConfigError
from .joint import (JointState, StepConfig, Trajectory, WindowMap, collision_step, dump_state, evolve, load_state,
                    reduced_engine_state, schmidt_coefficients)
from .oracle import build_dense, dense_time_operators, exact_evolve
from .protocol import FidelityReport, omega_sweep, protocol_fidelity, realized_channel
from .spectral import (ClockAmplitudes, ClockPulse, DispersionRelation, SpatialGrid, free_step,
                       make_gaussian_pulse)
from .timeops import DiagnosticsRecord, degradation_series, diagnose, pauli_rate, uncertainty_check

__version__ = "0.1.0"
