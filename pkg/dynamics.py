"""
Density-matrix dynamics of one lambda-system atom group.

Rotating-frame Hamiltonian, relaxation terms, classical RK4 stepping through a
piecewise-constant drive schedule, exact field-free propagation, and the
closed-form resonant solution used to verify the integrator.

Units: angular frequencies in rad/us, times in us. Levels |1>, |2>, |3> map to
array indices 0, 1, 2. Functions accept one 3x3 matrix or a stack (..., 3, 3),
so a batch of detuning groups integrates as a single array.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
import numpy.typing as npt

if TYPE_CHECKING:
    from pulses import Sequence

logger = logging.getLogger(__name__)

DensityMatrix = npt.NDArray[np.complex128]

# Step rule: dt = min(MAX_STEP_US, segment / MIN_STEPS_PER_SEGMENT,
#                     2*pi / (STEPS_PER_PERIOD * fastest frequency))
MAX_STEP_US = 1e-3
MIN_STEPS_PER_SEGMENT = 200
STEPS_PER_PERIOD = 800

_TIME_DECIMALS = 12

AMPLITUDE_CONVENTION = (
    "half-amplitude couplings: H = [[0, 0, -OmegaP/2], [0, -delta, -OmegaC/2], "
    "[-OmegaP*/2, -OmegaC*/2, -Delta]]; pulse area = OmegaR * duration with "
    "OmegaR^2 = OmegaP^2 + OmegaC^2, so a 2*pi area returns rho33 to zero. "
    "The printed rho12 equation carries no factor 1/2 and the opposite sign on "
    "the field terms; this model uses d(rho12)/dt = -(i*delta + gamma12)*rho12 "
    "- i(OmegaC*/2)*rho13 + i(OmegaP/2)*rho32."
)


class IntegrationError(RuntimeError):
    """Numerical failure while integrating; carries where it happened."""

    def __init__(self, message: str, time_us: float | None = None, group_index: int | None = None):
        super().__init__(message)
        self.time_us = time_us
        self.group_index = group_index


class StepBoundaryError(IntegrationError):
    """An RK4 step was asked to straddle a drive segment boundary."""


@dataclass(frozen=True)
class AtomParams:
    """Detunings (rad/us) and relaxation rates (1/us) of one atom group."""

    delta: float = 0.0
    probe_detuning: float = 0.0
    decay_31: float = 0.0
    decay_32: float = 0.0
    dephasing_13: float = 0.0
    dephasing_23: float = 0.0
    dephasing_12: float = 0.0

    def __post_init__(self):
        rates = {
            "decay_31": self.decay_31,
            "decay_32": self.decay_32,
            "dephasing_13": self.dephasing_13,
            "dephasing_23": self.dephasing_23,
            "dephasing_12": self.dephasing_12,
        }
        negative = [name for name, value in rates.items() if value < 0]
        if negative:
            raise ValueError(f"Relaxation rates must be >= 0: {', '.join(negative)}")
        floor = 0.5 * (self.decay_31 + self.decay_32)
        if self.dephasing_13 < floor or self.dephasing_23 < floor:
            logger.warning(
                "Optical dephasing below half the excited-state decay (gamma13=%s, gamma23=%s, floor=%s)",
                self.dephasing_13, self.dephasing_23, floor,
            )

    @property
    def has_relaxation(self) -> bool:
        return any((self.decay_31, self.decay_32, self.dephasing_13, self.dephasing_23, self.dephasing_12))

    def with_detuning(self, delta: float) -> "AtomParams":
        return replace(self, delta=delta)


class DriveSample(NamedTuple):
    """Instantaneous complex Rabi amplitudes (rad/us); phase in the argument."""

    omega_p: complex = 0j
    omega_c: complex = 0j

    @property
    def is_zero(self) -> bool:
        return self.omega_p == 0 and self.omega_c == 0


@dataclass(frozen=True)
class Trajectory:
    """Density-matrix snapshots of one group on a time grid."""

    times: np.ndarray
    states: np.ndarray

    def element(self, i: int, j: int) -> np.ndarray:
        return self.states[:, i, j]


class Diagnostics(NamedTuple):
    max_trace_error: float
    max_hermiticity_error: float
    min_eigenvalue: float


def ground_state() -> DensityMatrix:
    rho = np.zeros((3, 3), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def _hamiltonian(drive: DriveSample, params: AtomParams, deltas) -> np.ndarray:
    deltas = np.asarray(deltas, dtype=float)
    h = np.zeros(deltas.shape + (3, 3), dtype=complex)
    omega_p = complex(drive.omega_p)
    omega_c = complex(drive.omega_c)
    h[..., 0, 2] = -0.5 * omega_p
    h[..., 2, 0] = -0.5 * omega_p.conjugate()
    h[..., 1, 2] = -0.5 * omega_c
    h[..., 2, 1] = -0.5 * omega_c.conjugate()
    h[..., 1, 1] = -deltas
    h[..., 2, 2] = -params.probe_detuning
    return h


def build_hamiltonian(drive: DriveSample, params: AtomParams) -> np.ndarray:
    """Return H/hbar in rad/us for one group (detuning taken from params)."""
    return _hamiltonian(drive, params, params.delta)


def relaxation_rhs(rho: DensityMatrix, params: AtomParams) -> np.ndarray:
    """Population decay out of |3> and coherence damping, as a d(rho)/dt term."""
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros_like(rho)
    excited = rho[..., 2, 2]
    out[..., 2, 2] = -(params.decay_31 + params.decay_32) * excited
    out[..., 0, 0] = params.decay_31 * excited
    out[..., 1, 1] = params.decay_32 * excited
    for (i, j), rate in (((0, 1), params.dephasing_12), ((0, 2), params.dephasing_13), ((1, 2), params.dephasing_23)):
        out[..., i, j] = -rate * rho[..., i, j]
        out[..., j, i] = -rate * rho[..., j, i]
    return out


def _rhs(rho: np.ndarray, h: np.ndarray, params: AtomParams) -> np.ndarray:
    out = -1j * (h @ rho - rho @ h)
    if params.has_relaxation:
        out += relaxation_rhs(rho, params)
    return out


def total_rhs(rho: DensityMatrix, drive: DriveSample, params: AtomParams) -> np.ndarray:
    """d(rho)/dt = -i[H, rho] + R(rho)."""
    rho = np.asarray(rho, dtype=complex)
    return _rhs(rho, build_hamiltonian(drive, params), params)


def _hermitize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))


def _rk4(rho: np.ndarray, h: np.ndarray, dt: float, params: AtomParams) -> np.ndarray:
    k1 = _rhs(rho, h, params)
    k2 = _rhs(rho + (0.5 * dt) * k1, h, params)
    k3 = _rhs(rho + (0.5 * dt) * k2, h, params)
    k4 = _rhs(rho + dt * k3, h, params)
    return _hermitize(rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def rk4_step(rho: DensityMatrix, t: float, dt: float, drive: "Sequence", params: AtomParams) -> DensityMatrix:
    """One classical RK4 step of length dt starting at t.

    The drive must be constant over [t, t + dt]; a step that straddles a
    segment boundary raises StepBoundaryError.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    tol = 10.0 ** -_TIME_DECIMALS
    for boundary in drive.boundaries():
        if t + tol < boundary < t + dt - tol:
            raise StepBoundaryError(
                f"Step [{t}, {t + dt}] us crosses a segment boundary at {boundary} us",
                time_us=t,
            )
    h = build_hamiltonian(drive.drive_at(t + 0.5 * dt), params)
    return _rk4(np.asarray(rho, dtype=complex), h, dt, params)


def propagate_field_free(rho: DensityMatrix, dt: float, params: AtomParams, deltas=None) -> DensityMatrix:
    """Exact evolution with both fields off (diagonal H).

    ``deltas`` overrides params.delta with one value per stacked state.
    """
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    rho = np.asarray(rho, dtype=complex)
    delta = np.asarray(params.delta if deltas is None else deltas, dtype=float)
    big_delta = params.probe_detuning
    out = np.empty_like(rho)

    p1 = rho[..., 0, 0].real
    p2 = rho[..., 1, 1].real
    p3 = rho[..., 2, 2].real
    total_decay = params.decay_31 + params.decay_32
    if total_decay > 0:
        remain = math.exp(-total_decay * dt)
        lost = p3 * (1.0 - remain)
        p1 = p1 + (params.decay_31 / total_decay) * lost
        p2 = p2 + (params.decay_32 / total_decay) * lost
        p3 = p3 * remain
    out[..., 0, 0] = p1
    out[..., 1, 1] = p2
    out[..., 2, 2] = p3

    out[..., 0, 1] = rho[..., 0, 1] * np.exp(-(1j * delta + params.dephasing_12) * dt)
    out[..., 0, 2] = rho[..., 0, 2] * np.exp(-(1j * big_delta + params.dephasing_13) * dt)
    out[..., 1, 2] = rho[..., 1, 2] * np.exp(-(1j * (big_delta - delta) + params.dephasing_23) * dt)
    for i, j in ((0, 1), (0, 2), (1, 2)):
        out[..., j, i] = np.conj(out[..., i, j])
    return out


def resonant_lambda_oracle(omega_p: float, omega_c: float, t) -> DensityMatrix:
    """Closed-form rho(t) for delta = Delta = 0, no relaxation, rho(0) = |1><1|.

    Accepts a scalar t (returns 3x3) or an array of times (returns a stack).
    """
    if omega_p < 0 or omega_c < 0:
        raise ValueError("Oracle amplitudes must be real and non-negative")
    omega_r = math.hypot(omega_p, omega_c)
    if omega_r == 0:
        raise ValueError("Generalized Rabi frequency is zero")
    half = 0.5 * omega_r * np.asarray(t, dtype=float)
    cos_half = np.cos(half)
    amp = np.empty(half.shape + (3,), dtype=complex)
    amp[..., 0] = (omega_c**2 + omega_p**2 * cos_half) / omega_r**2
    amp[..., 1] = (omega_p * omega_c / omega_r**2) * (cos_half - 1.0)
    amp[..., 2] = 1j * (omega_p / omega_r) * np.sin(half)
    return amp[..., :, None] * np.conj(amp[..., None, :])


def physical_diagnostics(states) -> Diagnostics:
    """Worst trace, Hermiticity and positivity figures over a stack of states."""
    states = np.asarray(states, dtype=complex)
    trace = np.trace(states, axis1=-2, axis2=-1)
    hermiticity = np.abs(states - np.conj(np.swapaxes(states, -1, -2)))
    eigenvalues = np.linalg.eigvalsh(states)
    return Diagnostics(
        max_trace_error=float(np.max(np.abs(trace - 1.0))),
        max_hermiticity_error=float(np.max(hermiticity)),
        min_eigenvalue=float(np.min(eigenvalues)),
    )


def sample_times(span: float, interval: float) -> np.ndarray:
    """Uniform grid 0, interval, ... up to span (inclusive when it lands on it)."""
    if interval <= 0:
        raise ValueError(f"sample_interval must be positive, got {interval}")
    if span < 0:
        raise ValueError(f"span must be >= 0, got {span}")
    count = int(math.floor(span / interval + 1e-9))
    return np.round(np.arange(count + 1) * interval, _TIME_DECIMALS)


def _step_size(drive: DriveSample, params: AtomParams, delta_bound: float, segment: float) -> float:
    fastest = max(
        math.hypot(abs(drive.omega_p), abs(drive.omega_c)),
        delta_bound,
        abs(params.probe_detuning),
    )
    dt = min(MAX_STEP_US, segment / MIN_STEPS_PER_SEGMENT)
    if fastest > 0:
        dt = min(dt, 2.0 * math.pi / (STEPS_PER_PERIOD * fastest))
    return dt


def integrate_batch(
    rho0: DensityMatrix,
    seq: "Sequence",
    params: AtomParams,
    deltas,
    times: np.ndarray,
    *,
    delta_bound: float | None = None,
    group_offset: int = 0,
) -> np.ndarray:
    """Integrate one state per detuning from t = 0 and sample it at ``times``.

    Returns an array of shape (len(deltas), len(times), 3, 3). RK4 runs inside
    drive segments, the exact propagator between them. ``delta_bound`` fixes
    the step plan across batches so results do not depend on batching.
    """
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.empty((deltas.size, 0, 3, 3), dtype=complex)
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValueError("Sample times must be non-negative and strictly increasing")
    if delta_bound is None:
        delta_bound = float(np.max(np.abs(deltas)))

    state = np.broadcast_to(np.asarray(rho0, dtype=complex), deltas.shape + (3, 3)).copy()
    out = np.empty((deltas.size, times.size, 3, 3), dtype=complex)
    boundaries = [b for b in seq.boundaries() if 0.0 < b < times[-1]]
    events = np.union1d(times, np.asarray(boundaries, dtype=float))

    t = 0.0
    k = 0
    if times[0] == 0.0:
        out[:, 0] = state
        k = 1
    for t_next in events:
        t_next = float(t_next)
        if t_next > t:
            state = _advance(state, t, t_next, seq, params, deltas, delta_bound)
            if not np.isfinite(state).all():
                bad = np.flatnonzero(~np.isfinite(state).all(axis=(-2, -1)))
                index = group_offset + int(bad[0])
                raise IntegrationError(
                    f"Non-finite state in group {index} at t={t_next} us",
                    time_us=t_next,
                    group_index=index,
                )
            t = t_next
        while k < times.size and times[k] <= t:
            out[:, k] = state
            k += 1
    return out


def _advance(state, t0, t1, seq, params, deltas, delta_bound):
    mid = 0.5 * (t0 + t1)
    drive = seq.drive_at(mid)
    if drive.is_zero:
        return propagate_field_free(state, t1 - t0, params, deltas)
    segment = min(p.duration for p in seq.active_pulses(mid))
    dt_max = _step_size(drive, params, delta_bound, segment)
    steps = max(1, math.ceil((t1 - t0) / dt_max - 1e-9))
    dt = (t1 - t0) / steps
    h = _hamiltonian(drive, params, deltas)
    logger.debug("RK4 [%.6f, %.6f] us: %d steps of %.3e us", t0, t1, steps, dt)
    for _ in range(steps):
        state = _rk4(state, h, dt, params)
    return state


def integrate_sequence(
    rho0: DensityMatrix,
    seq: "Sequence",
    params: AtomParams,
    sample_interval: float,
    span: float | None = None,
) -> Trajectory:
    """Integrate one group through ``seq`` and sample it every ``sample_interval`` us."""
    seq.ensure_valid()
    times = sample_times(seq.total_span if span is None else span, sample_interval)
    states = integrate_batch(rho0, seq, params, [params.delta], times)[0]
    return Trajectory(times=times, states=states)
