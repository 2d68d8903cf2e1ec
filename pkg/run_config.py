"""
RunConfig: the declarative JSON description of one simulation run.

Frequencies are ordinary frequencies in kHz (converted by 2*pi internally),
times in us, decay and dephasing rates in 1/us. Unknown keys are rejected.
"""

from __future__ import annotations

import logging
import math
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from dynamics import AtomParams
from ensemble import EnsembleSpec
from phase_matching import DEFAULT_WAVELENGTH_NM, BeamGeometry, WaveVector
from pulses import (
    FWHM_PER_SIGMA,
    Envelope,
    Leg,
    PulseLabel,
    PulseSegment,
    RamanPulse,
    Sequence,
    khz,
    preset_sequence,
    to_khz,
    validate_sequence,
)

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Configuration problems as (field_path, message) pairs."""

    def __init__(self, diagnostics: list[tuple[str, str]]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(f"{path}: {message}" for path, message in self.diagnostics))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SystemConfig(_Strict):
    probe_detuning_khz: float = 0.0
    decay_31_per_us: float = Field(default=0.0, ge=0)
    decay_32_per_us: float = Field(default=0.0, ge=0)
    dephasing_13_per_us: float = Field(default=0.0, ge=0)
    dephasing_23_per_us: float = Field(default=0.0, ge=0)
    dephasing_12_per_us: float = Field(default=0.0, ge=0)


class EnsembleConfig(_Strict):
    fwhm_khz: float = Field(default=100.0, ge=0)
    groups: int = Field(default=201, ge=1)
    truncation_sigma: float = Field(default=4.0, gt=0)

    @field_validator("groups")
    @classmethod
    def _odd(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("groups must be odd so that delta = 0 is a node")
        return value


class PulseConfig(_Strict):
    label: PulseLabel
    t_start_us: float = Field(ge=0)
    duration_us: float = Field(gt=0)
    omega_p_khz: Optional[float] = Field(default=None, ge=0)
    omega_c_khz: Optional[float] = Field(default=None, ge=0)
    phase_deg: float = 0.0
    coupling_phase_deg: float = 0.0
    k_labels: list[str] = Field(default_factory=list, max_length=2)


class BeamConfig(_Strict):
    direction: tuple[float, float, float]
    wavelength_nm: float = Field(default=DEFAULT_WAVELENGTH_NM, gt=0)

    @field_validator("direction")
    @classmethod
    def _nonzero(cls, value: tuple[float, float, float]) -> tuple[float, float, float]:
        if not any(value):
            raise ValueError("direction must be non-zero")
        return value


class OutputConfig(_Strict):
    sample_interval_us: float = Field(default=0.05, gt=0)
    span_us: float = Field(gt=0)
    per_group: bool = False
    svg: bool = False
    series_csv: str = "series.csv"
    per_group_csv: str = "per_group.csv"
    report_json: str = "report.json"
    plot_svg: str = "plot.svg"


class RunConfig(_Strict):
    name: str = "custom"
    system: SystemConfig = Field(default_factory=SystemConfig)
    ensemble: EnsembleConfig = Field(default_factory=EnsembleConfig)
    sequence: list[PulseConfig] = Field(default_factory=list)
    geometry: dict[str, BeamConfig] = Field(default_factory=dict)
    output: OutputConfig

    def atom_params(self) -> AtomParams:
        s = self.system
        return AtomParams(
            delta=0.0,
            probe_detuning=khz(s.probe_detuning_khz),
            decay_31=s.decay_31_per_us,
            decay_32=s.decay_32_per_us,
            dephasing_13=s.dephasing_13_per_us,
            dephasing_23=s.dephasing_23_per_us,
            dephasing_12=s.dephasing_12_per_us,
        )

    def ensemble_spec(self) -> EnsembleSpec:
        e = self.ensemble
        return EnsembleSpec.from_fwhm(khz(e.fwhm_khz), e.groups, e.truncation_sigma)

    def to_sequence(self) -> Sequence:
        return Sequence(tuple(_to_pulse(entry) for entry in self.sequence), self.output.span_us)

    def beam_geometry(self) -> BeamGeometry | None:
        """P/C1/C2 beams when all three are defined, else None."""
        beams = {}
        for key in ("P", "C1", "C2"):
            beam = self.geometry.get(key)
            if beam is None:
                return None
            beams[key] = WaveVector.along(beam.direction, beam.wavelength_nm)
        return BeamGeometry(beams["P"], beams["C1"], beams["C2"])

    def check(self) -> list[tuple[str, str]]:
        """Cross-field diagnostics the per-field schema cannot express."""
        problems: list[tuple[str, str]] = []
        for index, entry in enumerate(self.sequence):
            path = f"sequence.{index}"
            legs = _legs(entry)
            if entry.label == PulseLabel.C2 and entry.omega_p_khz is not None:
                problems.append((f"{path}.omega_p_khz", "C2 drives the coupling leg only"))
            if entry.label in (PulseLabel.D, PulseLabel.R1, PulseLabel.R2) and len(legs) != 2:
                problems.append((path, f"{entry.label.value} needs omega_p_khz and omega_c_khz"))
            if not legs:
                problems.append((path, "pulse drives no leg"))
            if entry.k_labels and len(entry.k_labels) != len(legs):
                problems.append((f"{path}.k_labels", f"expected {len(legs)} label(s), one per driven leg"))
            for label in entry.k_labels:
                if label not in self.geometry:
                    problems.append((f"{path}.k_labels", f"undefined beam {label!r}"))
        if not problems:
            for violation in validate_sequence(self.to_sequence()):
                problems.append(("sequence", violation))
        return problems


def _legs(entry: PulseConfig) -> list[Leg]:
    legs = []
    if entry.omega_p_khz is not None:
        legs.append(Leg.probe)
    if entry.omega_c_khz is not None:
        legs.append(Leg.coupling)
    return legs


def _to_pulse(entry: PulseConfig) -> RamanPulse:
    legs = _legs(entry)
    labels = dict(zip(legs, entry.k_labels))
    probe = coupling = None
    if entry.omega_p_khz is not None:
        probe = PulseSegment(
            Leg.probe, khz(entry.omega_p_khz), math.radians(entry.phase_deg),
            entry.t_start_us, entry.duration_us, Envelope.rect, labels.get(Leg.probe, ""),
        )
    if entry.omega_c_khz is not None:
        # a coupling-only pulse carries its phase in phase_deg
        phase = entry.phase_deg if probe is None else entry.coupling_phase_deg
        coupling = PulseSegment(
            Leg.coupling, khz(entry.omega_c_khz), math.radians(phase),
            entry.t_start_us, entry.duration_us, Envelope.rect, labels.get(Leg.coupling, ""),
        )
    return RamanPulse(entry.label, probe, coupling)


def _diagnostics(error: ValidationError) -> list[tuple[str, str]]:
    out = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<root>"
        out.append((path, item["msg"]))
    return out


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON RunConfig; raises ConfigError with field paths."""
    try:
        cfg = RunConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigError(_diagnostics(exc)) from None
    problems = cfg.check()
    if problems:
        raise ConfigError(problems)
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    return cfg.model_dump_json(indent=2) + "\n"


def default_geometry() -> dict[str, BeamConfig]:
    """Collinear P and C1 along +z, counterpropagating readout C2."""
    return {
        "P": BeamConfig(direction=(0.0, 0.0, 1.0)),
        "C1": BeamConfig(direction=(0.0, 0.0, 1.0)),
        "C2": BeamConfig(direction=(0.0, 0.0, -1.0)),
    }


def _pulse_entry(pulse: RamanPulse) -> PulseConfig:
    probe, coupling = pulse.probe, pulse.coupling
    if probe is not None:
        phase, coupling_phase = probe.phase, coupling.phase if coupling is not None else 0.0
    else:
        phase, coupling_phase = (coupling.phase if coupling is not None else 0.0), 0.0
    return PulseConfig(
        label=pulse.label,
        t_start_us=pulse.t_start,
        duration_us=pulse.duration,
        omega_p_khz=to_khz(probe.amplitude) if probe is not None else None,
        omega_c_khz=to_khz(coupling.amplitude) if coupling is not None else None,
        phase_deg=math.degrees(phase),
        coupling_phase_deg=math.degrees(coupling_phase),
        k_labels=[s.k_label for s in pulse.segments if s.k_label],
    )


def preset_config(name: str) -> RunConfig:
    """RunConfig equivalent of a named figure preset."""
    preset = preset_sequence(name)
    spec = preset.ensemble
    cfg = RunConfig(
        name=name,
        ensemble=EnsembleConfig(
            fwhm_khz=to_khz(spec.sigma_delta * FWHM_PER_SIGMA),
            groups=spec.n_groups,
            truncation_sigma=spec.truncation,
        ),
        sequence=[_pulse_entry(p) for p in preset.sequence.pulses],
        geometry=default_geometry(),
        output=OutputConfig(sample_interval_us=preset.sample_interval, span_us=preset.sequence.total_span),
    )
    logger.info("Preset %s materialized (%d pulses)", name, len(cfg.sequence))
    return cfg
