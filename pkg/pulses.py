"""
Pulse segments, Raman pulses, sequences and the named figure presets.

A Raman pulse drives the probe (|1>-|3>) and coupling (|2>-|3>) legs with
time-aligned rectangular segments; the readout pulse C2 drives the coupling
leg only. Amplitudes are angular frequencies in rad/us, times in us.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

from dynamics import AtomParams, DriveSample
from ensemble import EnsembleSpec

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
_EDGE_TOL = 1e-12


def khz(frequency_khz: float) -> float:
    """Ordinary frequency in kHz -> angular frequency in rad/us."""
    return TWO_PI * frequency_khz * 1e-3


def to_khz(omega: float) -> float:
    """Angular frequency in rad/us -> ordinary frequency in kHz."""
    return omega / TWO_PI * 1e3


class Leg(str, Enum):
    probe = "probe"
    coupling = "coupling"


class Envelope(str, Enum):
    rect = "rect"


class PulseLabel(str, Enum):
    D = "D"
    R1 = "R1"
    R2 = "R2"
    C2 = "C2"
    custom = "custom"


_TWO_LEG_LABELS = (PulseLabel.D, PulseLabel.R1, PulseLabel.R2)


class SequenceError(ValueError):
    """A sequence failed validation; ``violations`` lists every problem."""

    def __init__(self, violations: list[str]):
        super().__init__("Invalid pulse sequence: " + "; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class PulseSegment:
    leg: Leg
    amplitude: float
    phase: float = 0.0
    t_start: float = 0.0
    duration: float = 1.0
    envelope: Envelope = Envelope.rect
    k_label: str = ""

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration

    @property
    def complex_amplitude(self) -> complex:
        if self.phase == 0.0:
            return complex(self.amplitude)
        return self.amplitude * cmath.exp(1j * self.phase)

    def covers(self, t: float) -> bool:
        """Half-open support [t_start, t_end)."""
        return self.t_start <= t < self.t_end


@dataclass(frozen=True)
class RamanPulse:
    label: PulseLabel
    probe: PulseSegment | None = None
    coupling: PulseSegment | None = None

    @property
    def segments(self) -> tuple[PulseSegment, ...]:
        return tuple(s for s in (self.probe, self.coupling) if s is not None)

    @property
    def t_start(self) -> float:
        return min(s.t_start for s in self.segments)

    @property
    def t_end(self) -> float:
        return max(s.t_end for s in self.segments)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


def pulse_center(pulse: RamanPulse) -> float:
    """Reference time T_X of a pulse: the middle of its support."""
    return 0.5 * (pulse.t_start + pulse.t_end)


def pulse_end(pulse: RamanPulse) -> float:
    return pulse.t_end


@dataclass(frozen=True)
class Sequence:
    pulses: tuple[RamanPulse, ...] = ()
    total_span: float = 0.0
    _boundaries: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        edges = {round(t, 12) for p in self.pulses for s in p.segments for t in (s.t_start, s.t_end)}
        object.__setattr__(self, "_boundaries", tuple(sorted(edges)))

    def boundaries(self) -> tuple[float, ...]:
        """Sorted start/end times of every segment."""
        return self._boundaries

    def drive_at(self, t: float) -> DriveSample:
        return drive_at(self, t)

    def active_pulses(self, t: float) -> list[RamanPulse]:
        return [p for p in self.pulses if any(s.covers(t) for s in p.segments)]

    def covers(self, t: float) -> bool:
        """True when t lies in the closed support of any pulse."""
        return any(p.t_start - _EDGE_TOL <= t <= p.t_end + _EDGE_TOL for p in self.pulses)

    def find(self, label: PulseLabel | str) -> RamanPulse | None:
        label = PulseLabel(label)
        for pulse in self.pulses:
            if pulse.label == label:
                return pulse
        return None

    def without(self, label: PulseLabel | str) -> "Sequence":
        label = PulseLabel(label)
        return Sequence(tuple(p for p in self.pulses if p.label != label), self.total_span)

    def violations(self) -> list[str]:
        return validate_sequence(self)

    def ensure_valid(self) -> None:
        problems = validate_sequence(self)
        if problems:
            raise SequenceError(problems)


def generalized_rabi(omega_p: float, omega_c: float) -> float:
    """Omega_R = sqrt(Omega_P^2 + Omega_C^2)."""
    return math.hypot(omega_p, omega_c)


def pulse_area(pulse: RamanPulse) -> float:
    """Omega_R * duration for a two-leg pulse, Omega * duration for one leg."""
    for segment in pulse.segments:
        if segment.envelope != Envelope.rect:
            raise ValueError(f"Unsupported envelope: {segment.envelope}")
    if pulse.probe is not None and pulse.coupling is not None:
        return generalized_rabi(pulse.probe.amplitude, pulse.coupling.amplitude) * pulse.probe.duration
    segments = pulse.segments
    if not segments:
        return 0.0
    return segments[0].amplitude * segments[0].duration


def solve_duration_for_area(omega_r: float, n: int = 1) -> float:
    """Duration giving area 2(2n-1)*pi, the n-th maximal transfer point."""
    if omega_r <= 0:
        raise ValueError(f"omega_r must be positive, got {omega_r}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return 2.0 * (2 * n - 1) * math.pi / omega_r


def make_raman_pulse(
    label: PulseLabel | str,
    omega_p: float | None,
    omega_c: float,
    t_start: float,
    duration: float,
    phases: tuple[float, float] = (0.0, 0.0),
    k_labels: tuple[str | None, str] | None = None,
) -> RamanPulse:
    """Build a rectangular Raman pulse with time-aligned legs.

    ``omega_p`` is None for the coupling-only readout pulse C2.
    """
    label = PulseLabel(label)
    if duration <= 0:
        raise ValueError(f"{label.value}: duration must be positive, got {duration}")
    if label == PulseLabel.C2 and omega_p is not None:
        raise ValueError("C2 drives the coupling leg only; omega_p must be None")
    if label in _TWO_LEG_LABELS and omega_p is None:
        raise ValueError(f"{label.value} needs both a probe and a coupling leg")
    if (omega_p is not None and omega_p < 0) or omega_c < 0:
        raise ValueError(f"{label.value}: amplitudes must be >= 0")
    if k_labels is None:
        k_labels = (None, "C2") if label == PulseLabel.C2 else ("P", "C1")

    probe = None
    if omega_p is not None:
        probe = PulseSegment(Leg.probe, omega_p, phases[0], t_start, duration, Envelope.rect, k_labels[0] or "")
    coupling = PulseSegment(Leg.coupling, omega_c, phases[1], t_start, duration, Envelope.rect, k_labels[1])
    return RamanPulse(label, probe, coupling)


def drive_at(seq: Sequence, t: float) -> DriveSample:
    """Sum of active segment amplitudes per leg; zero outside every segment."""
    omega_p = 0j
    omega_c = 0j
    for pulse in seq.pulses:
        for segment in pulse.segments:
            if segment.covers(t):
                if segment.leg == Leg.probe:
                    omega_p += segment.complex_amplitude
                else:
                    omega_c += segment.complex_amplitude
    return DriveSample(omega_p, omega_c)


def validate_sequence(seq: Sequence) -> list[str]:
    """Every violation in ``seq``; an empty list means the sequence is valid."""
    problems: list[str] = []
    if seq.total_span <= 0:
        problems.append(f"total_span must be positive, got {seq.total_span}")

    for index, pulse in enumerate(seq.pulses):
        name = f"pulse {index} ({pulse.label.value})"
        if not pulse.segments:
            problems.append(f"{name}: no legs")
            continue
        if pulse.label in _TWO_LEG_LABELS and (pulse.probe is None or pulse.coupling is None):
            problems.append(f"{name}: needs both probe and coupling legs")
        if pulse.label == PulseLabel.C2 and pulse.probe is not None:
            problems.append(f"{name}: C2 must not carry a probe leg")
        for segment in pulse.segments:
            leg = f"{name} {segment.leg.value} leg"
            if segment.leg == Leg.probe and pulse.probe is not segment:
                problems.append(f"{leg}: stored in the wrong slot")
            if segment.leg == Leg.coupling and pulse.coupling is not segment:
                problems.append(f"{leg}: stored in the wrong slot")
            if not segment.duration > 0:
                problems.append(f"{leg}: duration must be positive, got {segment.duration}")
            if segment.amplitude < 0:
                problems.append(f"{leg}: amplitude must be >= 0, got {segment.amplitude}")
            if segment.envelope != Envelope.rect:
                problems.append(f"{leg}: unsupported envelope {segment.envelope}")
        if pulse.probe is not None and pulse.coupling is not None:
            if (
                abs(pulse.probe.t_start - pulse.coupling.t_start) > _EDGE_TOL
                or abs(pulse.probe.duration - pulse.coupling.duration) > _EDGE_TOL
            ):
                problems.append(f"{name}: probe and coupling legs are not time-aligned")
        if seq.total_span > 0 and pulse.t_end > seq.total_span + _EDGE_TOL:
            problems.append(f"{name}: ends at {pulse.t_end} us, after total_span {seq.total_span} us")

    ordered = sorted(
        (p for p in enumerate(seq.pulses) if p[1].segments),
        key=lambda item: item[1].t_start,
    )
    for (i, first), (j, second) in zip(ordered, ordered[1:]):
        if first.t_end > second.t_start + _EDGE_TOL:
            problems.append(
                f"pulse {i} ({first.label.value}) overlaps pulse {j} ({second.label.value})"
            )
    return problems


# -- presets --------------------------------------------------------------

PRESET_NAMES = ("fig2b", "fig2c", "fig2e", "fig3", "fig4a", "fig4c", "fig4d")

PRESET_DESCRIPTIONS = {
    "fig2b": "D pulse alone (OmegaP 50 kHz, OmegaR 200 kHz, 5 us), broadened ensemble",
    "fig2c": "D pulse alone (OmegaP 50 kHz, OmegaR 200 kHz, 5 us), resonant group only",
    "fig2e": "D pulse alone (OmegaP 50 kHz, OmegaR 1 MHz, 5 us), broadened ensemble",
    "fig3": "Double rephasing: D on [0, 1] us, 2pi R1 at 20 us, 2pi R2 at 50 us",
    "fig4a": "Double rephasing plus C2 readout (100 kHz) switched on at the E2 time",
    "fig4c": "Population swap by R1 on the resonant group",
    "fig4d": "Population swap back by R2 on the resonant group",
}

DEFAULT_FWHM_KHZ = 100.0
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

_DATA_PROBE_KHZ = 50.0
_REPHASE_RABI_KHZ = 2500.0
_READOUT_KHZ = 100.0


class Preset(NamedTuple):
    sequence: Sequence
    ensemble: EnsembleSpec
    params: AtomParams
    sample_interval: float


def default_ensemble() -> EnsembleSpec:
    return EnsembleSpec(sigma_delta=khz(DEFAULT_FWHM_KHZ) / FWHM_PER_SIGMA)


def _data_pulse(rabi_khz: float, t_start: float, duration: float) -> RamanPulse:
    omega_p = khz(_DATA_PROBE_KHZ)
    omega_c = math.sqrt(khz(rabi_khz) ** 2 - omega_p**2)
    return make_raman_pulse(PulseLabel.D, omega_p, omega_c, t_start, duration)


def _rephasing_pulse(label: PulseLabel, center: float) -> RamanPulse:
    leg = khz(_REPHASE_RABI_KHZ / math.sqrt(2.0))
    duration = solve_duration_for_area(generalized_rabi(leg, leg))
    return make_raman_pulse(label, leg, leg, center - 0.5 * duration, duration)


def _double_rephasing() -> list[RamanPulse]:
    return [
        _data_pulse(1000.0, 0.0, 1.0),
        _rephasing_pulse(PulseLabel.R1, 20.0),
        _rephasing_pulse(PulseLabel.R2, 50.0),
    ]


def preset_sequence(name: str) -> Preset:
    """Sequence, ensemble, zero-rate atom parameters and sample interval of a figure preset."""
    params = AtomParams()
    resonant = EnsembleSpec(sigma_delta=0.0, n_groups=1)

    if name in ("fig2b", "fig2c"):
        rabi = khz(200.0)
        d = _data_pulse(200.0, 0.0, solve_duration_for_area(rabi))
        ensemble = resonant if name == "fig2c" else default_ensemble()
        return Preset(Sequence((d,), 20.0), ensemble, params, 0.02)
    if name == "fig2e":
        d = _data_pulse(1000.0, 0.0, 5.0)
        return Preset(Sequence((d,), 20.0), default_ensemble(), params, 0.02)
    if name == "fig3":
        return Preset(Sequence(tuple(_double_rephasing()), 70.0), default_ensemble(), params, 0.05)
    if name == "fig4a":
        pulses = _double_rephasing()
        t_d, t_r1, t_r2 = (pulse_center(p) for p in pulses)
        t_e2 = 2.0 * t_r2 - (2.0 * t_r1 - t_d)
        readout = khz(_READOUT_KHZ)
        pulses.append(make_raman_pulse(PulseLabel.C2, None, readout, t_e2, math.pi / readout))
        return Preset(Sequence(tuple(pulses), 70.0), default_ensemble(), params, 0.05)
    if name == "fig4c":
        return Preset(Sequence(tuple(_double_rephasing()[:2]), 25.0), resonant, params, 0.01)
    if name == "fig4d":
        return Preset(Sequence(tuple(_double_rephasing()), 55.0), resonant, params, 0.01)
    raise ValueError(f"Unknown preset: {name!r} (expected one of {', '.join(PRESET_NAMES)})")


def with_pulse(seq: Sequence, pulse: RamanPulse) -> Sequence:
    """Copy of ``seq`` with the pulse of the same label replaced (or appended)."""
    kept = [p for p in seq.pulses if p.label != pulse.label or pulse.label == PulseLabel.custom]
    kept.append(pulse)
    kept.sort(key=lambda p: p.t_start)
    return Sequence(tuple(kept), seq.total_span)
