"""
Echo detection, timing and inversion checks, readout metrics, conjugation
fits and calibration sweeps over ensemble trajectories.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence as SequenceLike

import numpy as np
from scipy.signal import find_peaks

from dynamics import AtomParams
from ensemble import EnsembleSpec, EnsembleTrajectory, ensemble_states_at, run_ensemble
from pulses import (
    PulseLabel,
    RamanPulse,
    Sequence,
    generalized_rabi,
    make_raman_pulse,
    pulse_area,
    pulse_center,
    pulse_end,
    with_pulse,
)

logger = logging.getLogger(__name__)

PLATEAU_WINDOW_US = 2.0
MAX_SAMPLE_SPACING_US = 0.2
MIN_PEAK_SEPARATION_US = 1.0
DEPLETION_TARGET = 0.9


class EchoKind(str, Enum):
    spin_echo = "spin_echo"
    optical_readout = "optical_readout"


@dataclass(frozen=True)
class EchoEvent:
    time: float
    amplitude: float
    inverted: bool
    kind: EchoKind = EchoKind.spin_echo

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "time_us": self.time,
            "amplitude": self.amplitude,
            "inverted": self.inverted,
        }


class EchoTiming(NamedTuple):
    t_e1: float
    t_e2: float

    @property
    def degenerate(self) -> bool:
        return math.isclose(self.t_e1, self.t_e2, rel_tol=0.0, abs_tol=1e-12)


class ReadoutMetrics(NamedTuple):
    peak_im_rho13: float
    depletion: float


class ConjugationFit(NamedTuple):
    max_residual: float
    global_phase: float
    residuals: np.ndarray


@dataclass(frozen=True)
class SweepResult:
    parameter: str
    values: list[float]
    objectives: list[float]
    argbest: float
    secondary: dict[str, list[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "values": list(self.values),
            "objectives": list(self.objectives),
            "argbest": self.argbest,
            **{name: list(column) for name, column in self.secondary.items()},
        }


# -- timing -----------------------------------------------------------------

def predicted_echo_times(t_d: float, t_r1: float, t_r2: float) -> EchoTiming:
    """T_E1 = 2 T_R1 - T_D, then T_E2 = 2 T_R2 - T_E1."""
    if not t_d < t_r1 < t_r2:
        raise ValueError(f"Pulse times must satisfy T_D < T_R1 < T_R2, got ({t_d}, {t_r1}, {t_r2})")
    t_e1 = 2.0 * t_r1 - t_d
    timing = EchoTiming(t_e1, 2.0 * t_r2 - t_e1)
    if timing.degenerate:
        logger.warning("E1 and E2 coincide at %.6f us; the echoes overlap", t_e1)
    return timing


def reference_times(seq: Sequence) -> tuple[float, float, float] | None:
    """(T_D, T_R1, T_R2) as pulse centers, or None when a label is missing."""
    pulses = [seq.find(label) for label in (PulseLabel.D, PulseLabel.R1, PulseLabel.R2)]
    if any(p is None for p in pulses):
        return None
    return tuple(pulse_center(p) for p in pulses)


def predicted_for_sequence(seq: Sequence) -> EchoTiming | None:
    times = reference_times(seq)
    if times is None:
        logger.warning("Sequence lacks one of D/R1/R2; no echo-time prediction")
        return None
    return predicted_echo_times(*times)


# -- detection --------------------------------------------------------------

def _data_pulse(seq: Sequence) -> RamanPulse | None:
    found = seq.find(PulseLabel.D)
    if found is None and seq.pulses:
        found = min(seq.pulses, key=lambda p: p.t_start)
    return found


def post_d_plateau(traj: EnsembleTrajectory, seq: Sequence) -> float:
    """Median |<rho12>| over the 2 us right after the data pulse."""
    data = _data_pulse(seq)
    if data is None:
        raise ValueError("Sequence has no data pulse")
    times = traj.times
    start = pulse_end(data)
    window = (times >= start) & (times <= start + PLATEAU_WINDOW_US)
    if not window.any():
        raise ValueError(f"Trajectory has no samples in [{start}, {start + PLATEAU_WINDOW_US}] us")
    return float(np.median(traj.abs_avg_rho12[window]))


def inversion_at(traj: EnsembleTrajectory, t: float) -> bool:
    """True when the averaged rho22 exceeds rho11 at t (linear interpolation)."""
    times = traj.times
    if times.size == 0 or t < times[0] or t > times[-1]:
        raise ValueError(f"t = {t} us lies outside the simulated span")
    rho11 = float(np.interp(t, times, traj.rho11))
    rho22 = float(np.interp(t, times, traj.rho22))
    return rho22 > rho11


def _max_spacing(times: np.ndarray) -> float:
    return float(np.max(np.diff(times))) if times.size > 1 else math.inf


def detect_spin_echoes(
    traj: EnsembleTrajectory,
    seq: Sequence,
    threshold_frac: float = 0.5,
) -> list[EchoEvent]:
    """Revivals of |<rho12>| outside pulse supports above threshold_frac x plateau."""
    times = traj.times
    if times.size < 3:
        return []
    spacing = _max_spacing(times)
    if spacing >= MAX_SAMPLE_SPACING_US:
        raise ValueError(f"Sample spacing {spacing} us is too coarse for echo detection (< {MAX_SAMPLE_SPACING_US})")
    data = _data_pulse(seq)
    if data is None:
        return []
    plateau = post_d_plateau(traj, seq)
    if plateau <= 0:
        return []

    signal = traj.abs_avg_rho12
    distance = max(1, int(round(MIN_PEAK_SEPARATION_US / spacing)))
    # flat tops are undriven resonant coherence, not revivals
    peaks, _ = find_peaks(signal, height=threshold_frac * plateau, distance=distance, plateau_size=(1, 1))
    settled = pulse_end(data) + PLATEAU_WINDOW_US
    events = []
    for index in peaks:
        t = float(times[index])
        if t <= settled or seq.covers(t):
            continue
        events.append(EchoEvent(t, float(signal[index]), bool(traj.rho22[index] > traj.rho11[index])))
    logger.info("Spin echoes: %d above %.3g (plateau %.3g)", len(events), threshold_frac * plateau, plateau)
    return events


def detect_optical_readout(traj: EnsembleTrajectory, seq: Sequence) -> list[EchoEvent]:
    """Peak of |averaged Im rho13| inside every C2 window."""
    events = []
    for pulse in seq.pulses:
        if pulse.label != PulseLabel.C2:
            continue
        window = (traj.times >= pulse.t_start) & (traj.times <= pulse_end(pulse))
        if not window.any():
            continue
        indices = np.flatnonzero(window)
        magnitude = np.abs(traj.im_rho13[indices])
        best = int(indices[int(np.argmax(magnitude))])
        amplitude = float(abs(traj.im_rho13[best]))
        if amplitude > 0:
            inverted = bool(traj.rho22[best] > traj.rho11[best])
            events.append(EchoEvent(float(traj.times[best]), amplitude, inverted, EchoKind.optical_readout))
    return events


# -- readout ----------------------------------------------------------------

def readout_metrics(
    traj_with_c2: EnsembleTrajectory,
    traj_without: EnsembleTrajectory,
    c2_window: tuple[float, float],
) -> ReadoutMetrics:
    """Peak |Im <rho13>| inside the window and the E2 depletion it caused.

    Depletion compares |<rho12>| at the first sample at or after the window
    end; it is 0 when the reference coherence is 0.
    """
    times = traj_with_c2.times
    if times.shape != traj_without.times.shape or not np.array_equal(times, traj_without.times):
        raise ValueError("Trajectories do not share a time grid")
    start, end = c2_window
    if times.size == 0 or start < times[0] or end > times[-1] or end < start:
        raise ValueError(f"C2 window [{start}, {end}] us is not inside the simulated span")

    window = (times >= start) & (times <= end)
    peak = float(np.max(np.abs(traj_with_c2.im_rho13[window]))) if window.any() else 0.0
    after = int(np.searchsorted(times, end - 1e-12, side="left"))
    reference = float(traj_without.abs_avg_rho12[after])
    depletion = 0.0 if reference == 0 else 1.0 - float(traj_with_c2.abs_avg_rho12[after]) / reference
    return ReadoutMetrics(peak, depletion)


# -- conjugation --------------------------------------------------------------

def conjugation_check(
    groups_before: SequenceLike[tuple[float, complex]],
    groups_after: SequenceLike[tuple[float, complex]],
) -> ConjugationFit:
    """Fit arg(after) + arg(before) = phi0 over all groups.

    A rephasing pulse that conjugates the coherence up to a global phase gives
    zero residuals.
    """
    if len(groups_before) != len(groups_after):
        raise ValueError("Before and after lists have different lengths")
    deltas_before = np.array([d for d, _ in groups_before], dtype=float)
    deltas_after = np.array([d for d, _ in groups_after], dtype=float)
    if not np.allclose(deltas_before, deltas_after, rtol=0.0, atol=1e-12):
        raise ValueError("Before and after lists use different detuning grids")
    before = np.array([z for _, z in groups_before], dtype=complex)
    after = np.array([z for _, z in groups_after], dtype=complex)
    zero = np.flatnonzero((np.abs(before) == 0) | (np.abs(after) == 0))
    if zero.size:
        raise ValueError(f"Zero-magnitude coherence in group {int(zero[0])} (delta={deltas_before[zero[0]]})")

    phase_sum = np.angle(after) + np.angle(before)
    global_phase = float(np.angle(np.sum(np.exp(1j * phase_sum))))
    residuals = np.angle(np.exp(1j * (phase_sum - global_phase)))
    return ConjugationFit(float(np.max(np.abs(residuals))), global_phase, residuals)


def rephasing_snapshots(
    seq: Sequence,
    spec: EnsembleSpec,
    base: AtomParams,
    label: PulseLabel | str = PulseLabel.R1,
    sigma_limit: float = 3.0,
    workers: int | None = None,
) -> tuple[list[tuple[float, complex]], list[tuple[float, complex]]]:
    """(delta, rho12) of every group within +-sigma_limit just before and after a pulse."""
    pulse = seq.find(label)
    if pulse is None:
        raise ValueError(f"Sequence has no {PulseLabel(label).value} pulse")
    groups, states = ensemble_states_at(seq, spec, base, [pulse.t_start, pulse.t_end], workers=workers)
    limit = sigma_limit * spec.sigma_delta
    before, after = [], []
    for index, group in enumerate(groups):
        if abs(group.delta) <= limit + 1e-12:
            before.append((group.delta, complex(states[index, 0, 0, 1])))
            after.append((group.delta, complex(states[index, 1, 0, 1])))
    return before, after


# -- sweeps -------------------------------------------------------------------

def _map_ordered(task, values, workers: int | None):
    if workers and workers > 1 and len(values) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(task, values))
    return [task(v) for v in values]


def _argbest(values: list[float], objectives: list[float]) -> float:
    return values[int(np.argmax(objectives))]


def resonant_coherence(omega_p: float, omega_c: float, area: float) -> float:
    """|rho12| of the resonant group after a pulse of the given area (closed form)."""
    omega_r = generalized_rabi(omega_p, omega_c)
    half = 0.5 * area
    c1 = (omega_c**2 + omega_p**2 * math.cos(half)) / omega_r**2
    c2 = omega_p * omega_c * (math.cos(half) - 1.0) / omega_r**2
    return abs(c1 * c2)


def sweep_coupling(
    template: RamanPulse,
    omega_c_values: list[float],
    spec: EnsembleSpec,
    base: AtomParams,
    *,
    workers: int | None = None,
) -> SweepResult:
    """Post-pulse ensemble |<rho12>| versus coupling amplitude at fixed probe amplitude.

    The template's probe amplitude, start time and area are kept; the
    duration is re-solved so the area stays put as omega_c changes.
    """
    if not omega_c_values:
        raise ValueError("omega_c sweep needs at least one value")
    if template.probe is None or template.coupling is None:
        raise ValueError("Coupling sweeps need a two-leg template pulse")
    omega_p = template.probe.amplitude
    area = pulse_area(template)
    phases = (template.probe.phase, template.coupling.phase)
    k_labels = (template.probe.k_label, template.coupling.k_label)

    def task(omega_c: float) -> tuple[float, float]:
        duration = area / generalized_rabi(omega_p, omega_c)
        pulse = make_raman_pulse(template.label, omega_p, omega_c, template.t_start, duration, phases, k_labels)
        seq = Sequence((pulse,), pulse.t_end)
        traj = run_ensemble(seq, spec, base, pulse.t_end, span=pulse.t_end, workers=1)
        objective = float(traj.abs_avg_rho12[-1])
        reference = resonant_coherence(omega_p, omega_c, area)
        return objective, (objective / reference if reference > 0 else 0.0)

    rows = _map_ordered(task, list(omega_c_values), workers)
    objectives = [r[0] for r in rows]
    values = [float(v) for v in omega_c_values]
    return SweepResult(
        parameter="omega_c",
        values=values,
        objectives=objectives,
        argbest=_argbest(values, objectives),
        secondary={"efficiency": [r[1] for r in rows]},
    )


def sweep_readout_area(
    c2_areas: list[float],
    seq: Sequence,
    spec: EnsembleSpec,
    base: AtomParams,
    sample_interval: float,
    *,
    workers: int | None = None,
) -> SweepResult:
    """Depletion of E2 versus C2 pulse area, C2 duration held fixed.

    argbest is the smallest area whose depletion reaches the target; when
    none does it falls back to the area with the largest depletion.
    """
    if not c2_areas:
        raise ValueError("c2_area sweep needs at least one value")
    if any(a <= 0 for a in c2_areas):
        raise ValueError("C2 areas must be positive")
    c2 = seq.find(PulseLabel.C2)
    if c2 is None or c2.coupling is None:
        raise ValueError("Readout sweeps need a sequence with a C2 pulse")
    reference = run_ensemble(seq.without(PulseLabel.C2), spec, base, sample_interval, workers=workers)
    window = (c2.t_start, c2.t_end)

    def task(area: float) -> float:
        pulse = make_raman_pulse(
            PulseLabel.C2, None, area / c2.duration, c2.t_start, c2.duration,
            (0.0, c2.coupling.phase), (None, c2.coupling.k_label),
        )
        traj = run_ensemble(with_pulse(seq, pulse), spec, base, sample_interval, workers=1)
        return readout_metrics(traj, reference, window).depletion

    values = [float(a) for a in c2_areas]
    objectives = _map_ordered(task, values, workers)
    reached = [v for v, d in zip(values, objectives) if d >= DEPLETION_TARGET]
    if reached:
        best = min(reached)
    else:
        logger.warning("No C2 area reached depletion %.2f (best %.3f)", DEPLETION_TARGET, max(objectives))
        best = _argbest(values, objectives)
    return SweepResult(parameter="c2_area", values=values, objectives=objectives, argbest=best)

